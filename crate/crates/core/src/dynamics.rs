//! Odometer automorphisms `α_n(f)(x, k) = u_n f(x, k + 1) u_n*` with
//! `u_n = v_1 ⊗ … ⊗ v_n`, and exact checks of the identities they satisfy.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact;
use crate::schedule::{DerivedSequences, ScheduleError};
use crate::system::{EigenvalueMap, SlotList, SlotRun, SystemError};

/// Largest `r(n+1)` for which the numeric spot check builds dense matrices.
pub const DENSE_GUARD: u64 = 2000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("r({stage}) = {size} exceeds the dense-matrix guard {DENSE_GUARD}; use verify_intertwine")]
    DenseGuard { stage: usize, size: BigUint },
}

/// `v_n`: identity on the first `d(n)` indices, then the cycle
/// `d(n)+j ↦ d(n)+j+1` on the last `2^{n-1}` indices, so that
/// `v A v* = (A_{σ(i), σ(j)})`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelPermutation {
    pub level: usize,
    #[serde(with = "exact::serde_biguint")]
    pub fixed: BigUint,
    pub cycle: u64,
}

impl LevelPermutation {
    pub fn new(seq: &DerivedSequences, level: usize) -> Result<Self, DynamicsError> {
        assert!(level >= 1, "v_n is defined for n ≥ 1");
        seq.require_stage(level)?;
        if level > 64 {
            return Err(SystemError::TooLarge(format!("2^{} cycle", level - 1)).into());
        }
        Ok(LevelPermutation {
            level,
            fixed: seq.d(level).clone(),
            cycle: 1 << (level - 1),
        })
    }

    pub fn size(&self) -> BigUint {
        &self.fixed + self.cycle
    }

    /// `σ(i)` for a 1-based index `i`.
    pub fn apply(&self, i: &BigUint) -> BigUint {
        if *i <= self.fixed {
            return i.clone();
        }
        let j = i - &self.fixed; // 1 ..= cycle
        if j == BigUint::from(self.cycle) {
            &self.fixed + 1u32
        } else {
            i + 1u32
        }
    }

    pub fn order(&self) -> BigUint {
        BigUint::from(self.cycle)
    }

    fn dense(&self) -> Option<Vec<usize>> {
        let size = self.size().to_usize()?;
        Some(
            (1..=size)
                .map(|i| self.apply(&BigUint::from(i)).to_usize().unwrap() - 1)
                .collect(),
        )
    }
}

/// `u_n` kept in factored form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationUnitary {
    pub stage: usize,
    pub factors: Vec<LevelPermutation>,
}

impl PermutationUnitary {
    pub fn new(seq: &DerivedSequences, stage: usize) -> Result<Self, DynamicsError> {
        seq.require_stage(stage)?;
        let factors = (1..=stage)
            .map(|j| LevelPermutation::new(seq, j))
            .collect::<Result<_, _>>()?;
        Ok(PermutationUnitary { stage, factors })
    }

    pub fn size(&self) -> BigUint {
        self.factors.iter().map(LevelPermutation::size).product()
    }

    /// The permutation on flat 0-based indices, first factor outermost.
    /// Only for sizes under [`DENSE_GUARD`].
    pub fn dense(&self) -> Result<Vec<usize>, DynamicsError> {
        let size = self.size();
        if size > BigUint::from(DENSE_GUARD) {
            return Err(DynamicsError::DenseGuard {
                stage: self.stage,
                size,
            });
        }
        let mut perm = vec![0usize];
        for f in &self.factors {
            let v = f.dense().expect("guarded size");
            let l = v.len();
            perm = perm
                .iter()
                .flat_map(|&a| v.iter().map(move |&i| a * l + i))
                .collect();
        }
        Ok(perm)
    }
}

pub fn order_of_unitary(u: &PermutationUnitary) -> BigUint {
    u.factors
        .iter()
        .map(LevelPermutation::order)
        .fold(BigUint::one(), |acc, o| acc.lcm(&o))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdometerAutomorphism {
    pub stage: usize,
    pub unitary: PermutationUnitary,
    /// `2^n`; the shift is `k ↦ k + 1` on `ℤ_{2^n}`.
    pub group_order: u64,
}

impl OdometerAutomorphism {
    /// Component read by `α_n(f)` at component `k`.
    pub fn source_component(&self, k: u64) -> u64 {
        (k + 1) % self.group_order
    }

    pub fn order(&self) -> BigUint {
        order_of_unitary(&self.unitary).lcm(&BigUint::from(self.group_order))
    }
}

pub fn build_automorphism(seq: &DerivedSequences, n: usize) -> Result<OdometerAutomorphism, DynamicsError> {
    if n > 62 {
        return Err(SystemError::TooLarge(format!("stage {n} group order")).into());
    }
    Ok(OdometerAutomorphism {
        stage: n,
        unitary: PermutationUnitary::new(seq, n)?,
        group_order: 1 << n,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub stage: usize,
    #[serde(with = "exact::serde_biguint")]
    pub unitary_order: BigUint,
    #[serde(with = "exact::serde_biguint")]
    pub automorphism_order: BigUint,
    /// `order(u_n)` divides `2^{n-1}` (or 1 at stage 0).
    pub unitary_order_divides_bound: bool,
    /// `order(α_n)` divides `2^n`.
    pub period_divides_group_order: bool,
}

impl PeriodicityReport {
    pub fn passed(&self) -> bool {
        self.unitary_order_divides_bound && self.period_divides_group_order
    }
}

pub fn check_periodicity(aut: &OdometerAutomorphism) -> PeriodicityReport {
    let unitary_order = order_of_unitary(&aut.unitary);
    let bound = exact::pow2(aut.stage.saturating_sub(1));
    let automorphism_order = aut.order();
    PeriodicityReport {
        stage: aut.stage,
        unitary_order_divides_bound: bound.is_multiple_of(&unitary_order),
        period_divides_group_order: BigUint::from(aut.group_order).is_multiple_of(&automorphism_order),
        unitary_order,
        automorphism_order,
    }
}

/// Where a slot's eigenvalue map sends `(x, k)`, symbolically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotImage {
    /// `(P_block(x), π(k) + shift)`.
    Projection { block: u64, shift: u64 },
    /// `(x_stage, element)`.
    Evaluation { stage: usize, element: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMismatch {
    /// 1-based slot index.
    pub slot: u64,
    pub lhs: SlotImage,
    pub rhs: SlotImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntertwineReport {
    pub n: usize,
    pub slots: u64,
    /// Slot-by-slot equality of `α_{n+1} ∘ Γ` and `Γ ∘ α_n`.
    pub identity_holds: bool,
    pub first_mismatch: Option<SlotMismatch>,
    /// `u_{n+1} = u_n ⊗ v_{n+1}`, so the matrix-coefficient parts agree.
    pub unitary_factorization: bool,
    /// The map under test has the prescribed slot layout.
    pub layout_conforms: bool,
    pub layout_issue: Option<String>,
}

impl IntertwineReport {
    pub fn passed(&self) -> bool {
        self.identity_holds && self.unitary_factorization && self.layout_conforms
    }
}

/// `S_{σ(i)}(x, k+1)`: the slot of `v_{n+1} Γ(f)(x, k+1) v_{n+1}*` at `i`.
fn image_after_shift(map: EigenvalueMap, group: u64) -> SlotImage {
    match map {
        EigenvalueMap::CoordProj { block } => SlotImage::Projection {
            block,
            shift: 1 % group,
        },
        EigenvalueMap::PointEval { stage, element } => SlotImage::Evaluation { stage, element },
    }
}

/// `(id × (+1)) ∘ S_i`: the slot of `Γ(α_n f)(x, k)` at `i`, ignoring the
/// matrix coefficient.
fn image_then_shift(map: EigenvalueMap, group: u64) -> SlotImage {
    match map {
        EigenvalueMap::CoordProj { block } => SlotImage::Projection {
            block,
            shift: 1 % group,
        },
        EigenvalueMap::PointEval { stage, element } => SlotImage::Evaluation {
            stage,
            element: (element + 1) % group,
        },
    }
}

pub fn verify_intertwine(seq: &DerivedSequences, n: usize) -> Result<IntertwineReport, DynamicsError> {
    let level = SlotList::canonical(seq, n)?;
    verify_intertwine_map(seq, n, &level)
}

/// Checks `α_{n+1} ∘ Γ_{n+1,n} = Γ_{n+1,n} ∘ α_n` for the level `level`
/// (normally the prescribed one, or a mutated copy in tests).
pub fn verify_intertwine_map(
    seq: &DerivedSequences,
    n: usize,
    level: &SlotList,
) -> Result<IntertwineReport, DynamicsError> {
    seq.require_stage(n + 1)?;
    let canonical = SlotList::canonical(seq, n)?;
    let v = LevelPermutation::new(seq, n + 1)?;
    let group = 1u64 << n;
    let fixed = v.fixed.to_u64().ok_or_else(|| {
        SystemError::TooLarge(format!("d({}) does not fit in 64 bits", n + 1))
    })?;
    let slots = level.len();

    let u_next = PermutationUnitary::new(seq, n + 1)?;
    let u_here = PermutationUnitary::new(seq, n)?;
    let unitary_factorization =
        u_next.factors[..n] == u_here.factors[..] && u_next.factors[n] == v;

    let (layout_conforms, layout_issue) = compare_layout(level, &canonical);

    let mut first_mismatch = None;
    if slots == fixed + v.cycle {
        // Indices ≤ d(n+1) are fixed by σ; projection runs there agree
        // trivially, so only point evaluations need checking.
        let mut start = 0u64;
        'runs: for run in level.runs() {
            let len = match run {
                SlotRun::Blocks { count, .. } => *count,
                SlotRun::Point { .. } => 1,
            };
            for offset in 0..len {
                let index = start + offset; // 0-based
                if index >= fixed {
                    break 'runs;
                }
                if matches!(run, SlotRun::Blocks { .. }) {
                    break;
                }
                let map = level.get(index).expect("in range");
                let lhs = image_after_shift(map, group);
                let rhs = image_then_shift(map, group);
                if lhs != rhs {
                    first_mismatch = Some(SlotMismatch {
                        slot: index + 1,
                        lhs,
                        rhs,
                    });
                    break 'runs;
                }
            }
            start += len;
        }
        if first_mismatch.is_none() {
            for index in fixed..slots {
                let sigma = v.apply(&BigUint::from(index + 1)).to_u64().unwrap() - 1;
                let lhs = image_after_shift(level.get(sigma).expect("in range"), group);
                let rhs = image_then_shift(level.get(index).expect("in range"), group);
                if lhs != rhs {
                    first_mismatch = Some(SlotMismatch {
                        slot: index + 1,
                        lhs,
                        rhs,
                    });
                    break;
                }
            }
        }
    }
    let identity_holds = slots == fixed + v.cycle && first_mismatch.is_none();

    Ok(IntertwineReport {
        n,
        slots,
        identity_holds,
        first_mismatch,
        unitary_factorization,
        layout_conforms,
        layout_issue,
    })
}

/// First slot where two run-encoded lists differ, found in `O(runs)`.
fn compare_layout(level: &SlotList, canonical: &SlotList) -> (bool, Option<String>) {
    if level == canonical {
        return (true, None);
    }
    if level.len() != canonical.len() {
        return (
            false,
            Some(format!("{} slots, expected {}", level.len(), canonical.len())),
        );
    }
    let boundaries = |l: &SlotList| {
        let mut at = 0u64;
        let mut out = vec![0u64];
        for run in l.runs() {
            at += match run {
                SlotRun::Blocks { count, .. } => *count,
                SlotRun::Point { .. } => 1,
            };
            out.push(at);
        }
        out
    };
    let mut cuts = boundaries(level);
    cuts.extend(boundaries(canonical));
    cuts.sort_unstable();
    cuts.dedup();
    for &at in &cuts[..cuts.len() - 1] {
        let (a, b) = (level.get(at), canonical.get(at));
        if a != b {
            return (
                false,
                Some(format!(
                    "slot {} is {} but the layout prescribes {}",
                    at + 1,
                    a.map(|m| m.to_string()).unwrap_or_default(),
                    b.map(|m| m.to_string()).unwrap_or_default()
                )),
            );
        }
    }
    (true, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheckReport {
    pub n: usize,
    pub matrix_size: u64,
    pub samples: usize,
    /// Largest Frobenius norm (an upper bound for the operator norm) of the
    /// difference of the two sides.
    pub max_deviation: f64,
}

pub fn spot_check_intertwine(
    seq: &DerivedSequences,
    n: usize,
    seed: u64,
    samples: usize,
) -> Result<SpotCheckReport, DynamicsError> {
    let level = SlotList::canonical(seq, n)?;
    spot_check_intertwine_map(seq, n, &level, seed, samples)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum PointId {
    Block(u64),
    Base,
}

/// Numeric version of the intertwining check with dense matrices and a
/// random point-supported `f ∈ C_n`.
///
/// Matrix entries are dyadic rationals, so a correct map gives exactly 0.
pub fn spot_check_intertwine_map(
    seq: &DerivedSequences,
    n: usize,
    level: &SlotList,
    seed: u64,
    samples: usize,
) -> Result<SpotCheckReport, DynamicsError> {
    seq.require_stage(n + 1)?;
    let big = seq.r(n + 1);
    if *big > BigUint::from(DENSE_GUARD) {
        return Err(DynamicsError::DenseGuard {
            stage: n + 1,
            size: big.clone(),
        });
    }
    let rn = seq.r(n).to_usize().unwrap();
    let l = level.len() as usize;
    let size = rn * l;
    let group = 1u64 << n;
    let slots: Vec<EigenvalueMap> = level.iter().collect();
    for s in &slots {
        if let EigenvalueMap::PointEval { stage, element } = s {
            if *stage != n || *element >= group {
                return Err(SystemError::MalformedMap(format!(
                    "point evaluation (x{stage}, {element}) does not land in stage {n}"
                ))
                .into());
            }
        }
    }

    let u_here = PermutationUnitary::new(seq, n)?.dense()?;
    let v_next = LevelPermutation::new(seq, n + 1)?;
    let v_perm: Vec<usize> = (1..=l)
        .map(|i| v_next.apply(&BigUint::from(i)).to_usize().unwrap() - 1)
        .collect();
    if v_perm.iter().any(|&i| i >= l) {
        return Err(SystemError::MalformedMap(format!("{l} slots, expected {}", v_next.size())).into());
    }
    // u_{n+1} = u_n ⊗ v_{n+1} on flat indices a·l + i.
    let u_next: Vec<usize> = u_here
        .iter()
        .flat_map(|&a| v_perm.iter().map(move |&i| a * l + i))
        .collect();

    let mut max_deviation = 0.0f64;
    for sample in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample as u64);
        let k: u64 = rng.gen_range(0..2 * group);
        let mut values: HashMap<(PointId, u64), Vec<f64>> = HashMap::new();
        let mut f = |point: PointId, component: u64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            values
                .entry((point, component))
                .or_insert_with(|| {
                    (0..rn * rn)
                        .map(|_| rng.gen_range(-512i32..=512) as f64 / 256.0)
                        .collect()
                })
                .clone()
        };
        let eval = |map: &EigenvalueMap, k: u64| -> (PointId, u64) {
            match *map {
                EigenvalueMap::CoordProj { block } => (PointId::Block(block), k % group),
                EigenvalueMap::PointEval { element, .. } => (PointId::Base, element),
            }
        };

        // Γ(f)(x, k+1) as a dense matrix.
        let mut gamma = vec![0.0f64; size * size];
        for (i, slot) in slots.iter().enumerate() {
            let (p, c) = eval(slot, (k + 1) % (2 * group));
            let block = f(p, c, &mut rng);
            for a in 0..rn {
                for b in 0..rn {
                    gamma[(a * l + i) * size + (b * l + i)] = block[a * rn + b];
                }
            }
        }
        // Γ(α_n f)(x, k) as a dense matrix.
        let mut rhs = vec![0.0f64; size * size];
        for (i, slot) in slots.iter().enumerate() {
            let (p, c) = eval(slot, k);
            let block = f(p, (c + 1) % group, &mut rng);
            for a in 0..rn {
                for b in 0..rn {
                    rhs[(a * l + i) * size + (b * l + i)] =
                        block[u_here[a] * rn + u_here[b]];
                }
            }
        }
        // u_{n+1} Γ(f)(x, k+1) u_{n+1}* minus the right-hand side.
        let mut sum_sq = 0.0f64;
        for p in 0..size {
            let row = u_next[p] * size;
            for q in 0..size {
                let diff = gamma[row + u_next[q]] - rhs[p * size + q];
                sum_sq += diff * diff;
            }
        }
        max_deviation = max_deviation.max(sum_sq.sqrt());
    }

    Ok(SpotCheckReport {
        n,
        matrix_size: size as u64,
        samples,
        max_deviation,
    })
}

/// Projections `p_0, …, p_{2^n − 1}`, each the identity on one component
/// of `X_n × ℤ_{2^n}` and zero elsewhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RokhlinTower {
    pub stage: usize,
    /// `p_k` is supported on component `components[k]`.
    pub components: Vec<u64>,
}

impl RokhlinTower {
    pub fn length(&self) -> u64 {
        self.components.len() as u64
    }

    /// Central element `p_k` as a 0/1 scalar per component.
    fn indicator(&self, k: usize) -> Vec<u8> {
        let mut v = vec![0u8; self.components.len()];
        v[self.components[k] as usize] = 1;
        v
    }
}

/// Tower indexed along the orbit of `α_n`.
///
/// `α_n` sends the indicator of component `c` to that of `c − 1`, so `p_k`
/// sits on component `−k mod 2^n` to make `α_n(p_k) = p_{k+1}`.
pub fn rokhlin_tower(seq: &DerivedSequences, n: usize) -> Result<RokhlinTower, DynamicsError> {
    seq.require_stage(n)?;
    if n > crate::system::MAX_ENUMERATED_STAGE {
        return Err(SystemError::TooLarge(format!("tower of length 2^{n}")).into());
    }
    let len = 1u64 << n;
    Ok(RokhlinTower {
        stage: n,
        components: (0..len).map(|k| (len - k) % len).collect(),
    })
}

/// Applies `α_n` to a central scalar-valued element given per component.
///
/// Conjugation by `u_n` fixes scalar blocks, so only the shift acts.
pub fn apply_to_central(aut: &OdometerAutomorphism, element: &[u8]) -> Vec<u8> {
    (0..aut.group_order)
        .map(|k| element[aut.source_component(k) as usize])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerReport {
    pub stage: usize,
    pub length: u64,
    pub partition_of_unity: bool,
    pub cyclic_shift: bool,
    pub central: bool,
    /// Achieved tolerance in every condition; always 0 here.
    pub epsilon: f64,
}

impl TowerReport {
    pub fn passed(&self) -> bool {
        self.partition_of_unity && self.cyclic_shift && self.central
    }
}

pub fn verify_tower(tower: &RokhlinTower, aut: &OdometerAutomorphism) -> TowerReport {
    let len = tower.components.len();
    let stage_ok = tower.stage == aut.stage && len as u64 == aut.group_order;

    let mut sum = vec![0u32; len];
    for k in 0..len {
        for (s, v) in sum.iter_mut().zip(tower.indicator(k)) {
            *s += v as u32;
        }
    }
    let partition_of_unity = stage_ok && sum.iter().all(|&s| s == 1);

    let cyclic_shift = stage_ok
        && (0..len).all(|k| apply_to_central(aut, &tower.indicator(k)) == tower.indicator((k + 1) % len));

    // Each p_k is 0 or 1 times the identity matrix on a whole component,
    // constant in x, hence central in C(X_n × ℤ_{2^n}, M_{r(n)}).
    let central = stage_ok
        && (0..len).all(|k| tower.indicator(k).iter().all(|&v| v <= 1));

    TowerReport {
        stage: tower.stage,
        length: len as u64,
        partition_of_unity,
        cyclic_shift,
        central,
        epsilon: 0.0,
    }
}

/// Smallest `n` with `2^n ≥ min_length`.
pub fn stage_for_tower_length(min_length: u64) -> usize {
    min_length.max(1).next_power_of_two().trailing_zeros() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{derive_sequences, ParameterSchedule};

    fn tiny() -> DerivedSequences {
        derive_sequences(&ParameterSchedule::explicit([2, 3, 5]), 3).unwrap()
    }

    fn b(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn v1_is_identity() {
        let v = LevelPermutation::new(&tiny(), 1).unwrap();
        assert_eq!(v.size(), b(3));
        assert_eq!(v.dense().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn v2_swaps_last_two() {
        let v = LevelPermutation::new(&tiny(), 2).unwrap();
        assert_eq!(v.size(), b(5));
        assert_eq!(v.dense().unwrap(), vec![0, 1, 2, 4, 3]);
    }

    #[test]
    fn v3_four_cycle() {
        let v = LevelPermutation::new(&tiny(), 3).unwrap();
        assert_eq!(v.size(), b(9));
        let img: Vec<u64> = (6..=9).map(|i| v.apply(&b(i)).to_u64().unwrap()).collect();
        assert_eq!(img, vec![7, 8, 9, 6]);
        assert_eq!(v.apply(&b(5)), b(5));
    }

    #[test]
    fn unitary_orders() {
        let seq = derive_sequences(&ParameterSchedule::powers_of_ten(), 5).unwrap();
        let order = |n| order_of_unitary(&PermutationUnitary::new(&seq, n).unwrap());
        assert_eq!(order(0), b(1));
        assert_eq!(order(1), b(1));
        assert_eq!(order(3), b(4));
        assert_eq!(order(5), b(16));
    }

    #[test]
    fn dense_unitary_matches_factors() {
        let seq = tiny();
        let u = PermutationUnitary::new(&seq, 2).unwrap();
        let perm = u.dense().unwrap();
        assert_eq!(perm.len(), 15);
        // Row 2 of v1 (identity) with v2 swapping slots 3 and 4 (0-based).
        assert_eq!(&perm[10..15], &[10, 11, 12, 14, 13]);
        let seq10 = derive_sequences(&ParameterSchedule::powers_of_ten(), 3).unwrap();
        assert!(PermutationUnitary::new(&seq10, 3).unwrap().dense().is_err());
    }

    #[test]
    fn intertwine_small_stages() {
        let seq = tiny();
        for n in 0..=2 {
            let report = verify_intertwine(&seq, n).unwrap();
            assert!(report.passed(), "n={n}: {report:?}");
        }
    }

    #[test]
    fn swapped_point_evaluations_break_identity() {
        let seq = tiny();
        let mut level = SlotList::canonical(&seq, 2).unwrap();
        level.swap(5, 6).unwrap();
        let report = verify_intertwine_map(&seq, 2, &level).unwrap();
        assert!(!report.identity_holds);
        assert_eq!(report.first_mismatch.as_ref().unwrap().slot, 6);
        assert!(!report.layout_conforms);
    }

    #[test]
    fn relabelled_projection_keeps_identity_but_fails_layout() {
        let seq = tiny();
        let mut level = SlotList::canonical(&seq, 1).unwrap();
        level
            .set(0, EigenvalueMap::CoordProj { block: 2 })
            .unwrap();
        let report = verify_intertwine_map(&seq, 1, &level).unwrap();
        assert!(report.identity_holds);
        assert!(!report.layout_conforms);
        assert!(report.layout_issue.unwrap().starts_with("slot 1"));
    }

    #[test]
    fn spot_check_zero_for_correct_maps() {
        let seq = tiny();
        for n in 0..=1 {
            let r = spot_check_intertwine(&seq, n, 17, 20).unwrap();
            assert_eq!(r.max_deviation, 0.0);
        }
        let seq10 = derive_sequences(&ParameterSchedule::powers_of_ten(), 3).unwrap();
        assert!(matches!(
            spot_check_intertwine(&seq10, 2, 0, 1),
            Err(DynamicsError::DenseGuard { .. })
        ));
    }

    #[test]
    fn spot_check_detects_swap() {
        let seq = tiny();
        let mut level = SlotList::canonical(&seq, 1).unwrap();
        // block 3 trades places with the first point evaluation
        level.swap(2, 3).unwrap();
        let r = spot_check_intertwine_map(&seq, 1, &level, 3, 10).unwrap();
        assert!(r.max_deviation > 0.5);
        // two projections trading places is invisible to the identity
        let mut relabel = SlotList::canonical(&seq, 1).unwrap();
        relabel.swap(0, 1).unwrap();
        let r = spot_check_intertwine_map(&seq, 1, &relabel, 3, 10).unwrap();
        assert_eq!(r.max_deviation, 0.0);
    }

    #[test]
    fn towers() {
        let seq = tiny();
        for n in 1..=3 {
            let aut = build_automorphism(&seq, n).unwrap();
            let tower = rokhlin_tower(&seq, n).unwrap();
            assert_eq!(tower.length(), 1 << n);
            assert!(verify_tower(&tower, &aut).passed());
        }
        let aut = build_automorphism(&seq, 1).unwrap();
        assert_eq!(rokhlin_tower(&seq, 1).unwrap().components, vec![0, 1]);
        assert!(!verify_tower(&rokhlin_tower(&seq, 2).unwrap(), &aut).passed());
    }

    #[test]
    fn alpha_moves_component_indicators_down() {
        let seq = tiny();
        let aut = build_automorphism(&seq, 2).unwrap();
        let delta = |c: usize| {
            let mut v = vec![0u8; 4];
            v[c] = 1;
            v
        };
        for c in 0..4 {
            assert_eq!(apply_to_central(&aut, &delta(c)), delta((c + 3) % 4));
        }
    }

    #[test]
    fn tower_stage_for_length() {
        assert_eq!(stage_for_tower_length(100), 7);
        assert_eq!(stage_for_tower_length(128), 7);
        assert_eq!(stage_for_tower_length(129), 8);
        assert_eq!(stage_for_tower_length(1), 0);
        assert_eq!(stage_for_tower_length(0), 0);
    }

    #[test]
    fn periodicity() {
        let seq = derive_sequences(&ParameterSchedule::powers_of_ten(), 10).unwrap();
        for n in 0..=10 {
            let report = check_periodicity(&build_automorphism(&seq, n).unwrap());
            assert!(report.passed(), "n={n}");
            assert_eq!(report.automorphism_order, exact::pow2(n));
        }
    }
}
