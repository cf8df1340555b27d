//! Seeded point scheme `x_m ∈ (S²)^{s(m)}` and a Monte-Carlo estimate of
//! how densely the evaluation points cover `X_n`.
//!
//! This is a diagnostic: density over all stages at once cannot be
//! certified by finitely many points.

use std::f64::consts::PI;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SystemError, MATERIALIZE_LIMIT};
use crate::schedule::DerivedSequences;

/// Largest `s(n)` for which points of `X_n` are embedded as float vectors.
pub const MAX_DENSITY_FACTORS: u64 = 64;

pub type SpherePoint = [f64; 3];

/// Geodesic diameter of `S²`, returned when there is nothing to measure.
pub const EMPTY_SET_RADIUS: f64 = PI;

// Plastic number: the R2 sequence uses 1/p and 1/p² as its two rotations.
const PLASTIC: f64 = 1.324_717_957_244_746;

/// Shifted R2 low-discrepancy sequence pushed to the sphere by the
/// equal-area map `(u, v) ↦ (z = 1 − 2u, φ = 2πv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointScheme {
    pub seed: u64,
    shift: [f64; 2],
}

impl PointScheme {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointScheme {
            seed,
            shift: [rng.gen::<f64>(), rng.gen::<f64>()],
        }
    }

    pub fn sphere_point(&self, index: u64) -> SpherePoint {
        let i = index as f64;
        let u = (self.shift[0] + i / PLASTIC).fract();
        let v = (self.shift[1] + i / (PLASTIC * PLASTIC)).fract();
        let z = 1.0 - 2.0 * u;
        let rho = (1.0 - z * z).max(0.0).sqrt();
        let phi = 2.0 * PI * v;
        [rho * phi.cos(), rho * phi.sin(), z]
    }

    /// Coordinates of `x_m`; stage `m` draws sequence indices after those
    /// used by every earlier stage.
    pub fn point(&self, seq: &DerivedSequences, m: usize) -> Result<Vec<SpherePoint>, SystemError> {
        seq.require_stage(m)?;
        let len = small(seq.s(m), "s(m)")?;
        let offset: u64 = (0..m)
            .map(|i| small(seq.s(i), "s(i)"))
            .sum::<Result<u64, _>>()?;
        Ok((0..len).map(|c| self.sphere_point(offset + c)).collect())
    }
}

fn small(v: &BigUint, what: &str) -> Result<u64, SystemError> {
    match v.to_u64() {
        Some(x) if x <= MATERIALIZE_LIMIT => Ok(x),
        _ => Err(SystemError::TooLarge(format!("{what} = {v} points"))),
    }
}

pub fn geodesic(a: &SpherePoint, b: &SpherePoint) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

fn dot(a: &SpherePoint, b: &SpherePoint) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn random_sphere_point<R: Rng>(rng: &mut R) -> SpherePoint {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    [rho * phi.cos(), rho * phi.sin(), z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffEstimate {
    pub cutoff: usize,
    pub evaluation_points: u64,
    /// Largest sampled distance to the evaluation set, in radians, using the
    /// max-over-coordinates geodesic metric on `(S²)^{s(n)}`.
    pub covering_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub target_stage: usize,
    pub samples: usize,
    pub seed: u64,
    pub scheme_seed: u64,
    /// One entry for every cutoff `target_stage ..= cutoff`.
    pub estimates: Vec<CutoffEstimate>,
}

impl DensityReport {
    pub fn at_cutoff(&self, cutoff: usize) -> Option<f64> {
        self.estimates
            .iter()
            .find(|e| e.cutoff == cutoff)
            .map(|e| e.covering_radius)
    }
}

/// Estimates the covering radius of `{P_ν1 ∘ … ∘ P_νk (x_m) : n < m ≤ cutoff}`
/// in `X_n` from `samples` uniformly drawn points.
pub fn density_diagnostic(
    scheme: &PointScheme,
    seq: &DerivedSequences,
    target_stage: usize,
    cutoff: usize,
    samples: usize,
    seed: u64,
) -> Result<DensityReport, SystemError> {
    seq.require_stage(target_stage)?;
    let factors = seq.s(target_stage).to_u64().unwrap_or(u64::MAX);
    if factors > MAX_DENSITY_FACTORS {
        return Err(SystemError::TooLarge(format!(
            "X_{target_stage} has {} sphere factors; the diagnostic embeds at most {MAX_DENSITY_FACTORS}",
            seq.s(target_stage)
        )));
    }
    let factors = factors as usize;
    if cutoff > target_stage {
        seq.require_stage(cutoff)?;
    }

    // Evaluation points grouped by the stage they came from; each point of
    // X_n is a block of `factors` consecutive coordinates of some x_m.
    let mut by_stage: Vec<Vec<SpherePoint>> = Vec::new();
    let mut total = 0u64;
    for m in target_stage + 1..=cutoff {
        let blocks = small(&(seq.s(m) / seq.s(target_stage)), "projected points")?;
        total += blocks;
        if total > MATERIALIZE_LIMIT {
            return Err(SystemError::TooLarge(format!("{total} evaluation points")));
        }
        by_stage.push(scheme.point(seq, m)?);
    }

    let levels = by_stage.len();
    // Per sample: best (largest) worst-coordinate cosine at each cutoff.
    let best_cosines: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let y: Vec<SpherePoint> = (0..factors).map(|_| random_sphere_point(&mut rng)).collect();
            let mut best = f64::NEG_INFINITY;
            let mut out = Vec::with_capacity(levels);
            for pts in &by_stage {
                for block in pts.chunks_exact(factors) {
                    let worst = y
                        .iter()
                        .zip(block)
                        .map(|(a, b)| dot(a, b))
                        .fold(f64::INFINITY, f64::min);
                    best = best.max(worst);
                }
                out.push(best);
            }
            out
        })
        .collect();

    let mut estimates = vec![CutoffEstimate {
        cutoff: target_stage,
        evaluation_points: 0,
        covering_radius: EMPTY_SET_RADIUS,
    }];
    let mut points = 0u64;
    for (level, pts) in by_stage.iter().enumerate() {
        points += (pts.len() / factors) as u64;
        let worst_cos = best_cosines
            .iter()
            .map(|v| v[level])
            .fold(f64::INFINITY, f64::min);
        let radius = if samples == 0 {
            0.0
        } else {
            worst_cos.clamp(-1.0, 1.0).acos()
        };
        estimates.push(CutoffEstimate {
            cutoff: target_stage + level + 1,
            evaluation_points: points,
            covering_radius: radius,
        });
    }
    // Cutoffs at or below the target stage leave the evaluation set empty.
    if cutoff < target_stage {
        estimates.truncate(1);
        estimates[0].cutoff = cutoff;
    }

    Ok(DensityReport {
        target_stage,
        samples,
        seed,
        scheme_seed: scheme.seed,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{derive_sequences, ParameterSchedule};

    fn doubling() -> DerivedSequences {
        derive_sequences(
            &ParameterSchedule::explicit([2, 3, 5, 9, 17, 33, 65, 129, 257]),
            9,
        )
        .unwrap()
    }

    #[test]
    fn points_are_unit_vectors() {
        let scheme = PointScheme::new(7);
        for i in 0..10_000 {
            let p = scheme.sphere_point(i);
            let norm = dot(&p, &p).sqrt();
            assert!((norm - 1.0).abs() <= f64::powi(2.0, -40));
        }
    }

    #[test]
    fn stage_points_are_disjoint_slices_of_the_sequence() {
        let seq = doubling();
        let scheme = PointScheme::new(1);
        let x2 = scheme.point(&seq, 2).unwrap();
        assert_eq!(x2.len(), 6);
        // s(0) + s(1) = 3 indices precede stage 2
        assert_eq!(x2[0], scheme.sphere_point(3));
    }

    #[test]
    fn empty_cutoff_gives_sentinel() {
        let seq = doubling();
        let report = density_diagnostic(&PointScheme::new(1), &seq, 0, 0, 50, 3).unwrap();
        assert_eq!(report.estimates.len(), 1);
        assert_eq!(report.at_cutoff(0), Some(EMPTY_SET_RADIUS));
    }

    #[test]
    fn monotone_in_cutoff() {
        let seq = doubling();
        let report = density_diagnostic(&PointScheme::new(11), &seq, 0, 5, 300, 9).unwrap();
        for w in report.estimates.windows(2) {
            assert!(w[1].covering_radius <= w[0].covering_radius);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let seq = doubling();
        let a = density_diagnostic(&PointScheme::new(2), &seq, 1, 4, 100, 5).unwrap();
        let b = density_diagnostic(&PointScheme::new(2), &seq, 1, 4, 100, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.estimates.last().unwrap().evaluation_points, 3 + 15 + 135);
    }

    #[test]
    fn guard_on_factor_count() {
        let seq = derive_sequences(&ParameterSchedule::powers_of_ten(), 3).unwrap();
        assert!(matches!(
            density_diagnostic(&PointScheme::new(0), &seq, 2, 3, 10, 0),
            Err(SystemError::TooLarge(_))
        ));
    }
}
