//! Parameter schedules `d(n)` and the integer sequences derived from them.
//!
//! Stage `n` of the inductive system has matrix size `r(n) = Π_{j≤n} l(j)`
//! with `l(n) = d(n) + 2^{n-1}`, and base space `(S²)^{s(n)}` with
//! `s(n) = Π_{j≤n} d(j)`. The fraction `s(n)/r(n)` of "bundle" rank is
//! strictly decreasing; its infimum κ drives the comparison certificate.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{self, pow2, ratio_of, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("invalid schedule parameters: {0}")]
    InvalidParameters(String),
    #[error("growth condition fails at stage {stage}: d({stage}) = {d} is not greater than 2^{} = {bound}", stage - 1)]
    GrowthViolation {
        stage: usize,
        d: BigUint,
        bound: BigUint,
    },
    #[error("explicit schedule defines d(1..{len}) but stage {requested} was requested")]
    BeyondPrefix { requested: usize, len: usize },
    #[error("tail bound {tail} at stage {stage_used} is not below 1; raise the stage used for kappa")]
    TailNotCertifiable { stage_used: usize, tail: String },
    #[error("stage {stage} is beyond the derived cap {cap}")]
    StageBeyondCap { stage: usize, cap: usize },
}

/// How `d(n)` is specified for `n ≥ 1`; `d(0) = 1` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterSchedule {
    /// `d(n) = coefficient · base^n`.
    Geometric { coefficient: u64, base: u64 },
    /// `d(1), …, d(N)` listed explicitly.
    Explicit { d: Vec<u64> },
}

impl ParameterSchedule {
    pub fn geometric(coefficient: u64, base: u64) -> Self {
        ParameterSchedule::Geometric { coefficient, base }
    }

    pub fn explicit(d: impl Into<Vec<u64>>) -> Self {
        ParameterSchedule::Explicit { d: d.into() }
    }

    /// The schedule `d(n) = 10^n`.
    pub fn powers_of_ten() -> Self {
        Self::geometric(1, 10)
    }

    /// Largest stage the schedule defines, `None` when unbounded.
    pub fn max_stage(&self) -> Option<usize> {
        match self {
            ParameterSchedule::Geometric { .. } => None,
            ParameterSchedule::Explicit { d } => Some(d.len()),
        }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self, ParameterSchedule::Geometric { .. })
    }

    pub fn d(&self, n: usize) -> Result<BigUint, ScheduleError> {
        if n == 0 {
            return Ok(BigUint::one());
        }
        match self {
            ParameterSchedule::Geometric { coefficient, base } => {
                Ok(BigUint::from(*coefficient) * num_traits::pow(BigUint::from(*base), n))
            }
            ParameterSchedule::Explicit { d } => d
                .get(n - 1)
                .map(|&v| BigUint::from(v))
                .ok_or(ScheduleError::BeyondPrefix {
                    requested: n,
                    len: d.len(),
                }),
        }
    }

    fn check_parameters(&self) -> Result<(), ScheduleError> {
        match self {
            ParameterSchedule::Geometric { coefficient, base } => {
                if *coefficient < 1 {
                    return Err(ScheduleError::InvalidParameters(
                        "geometric coefficient must be at least 1".into(),
                    ));
                }
                if *base < 3 {
                    return Err(ScheduleError::InvalidParameters(
                        "geometric base must be at least 3".into(),
                    ));
                }
                Ok(())
            }
            ParameterSchedule::Explicit { d } => {
                if d.is_empty() {
                    return Err(ScheduleError::InvalidParameters(
                        "explicit schedule needs at least d(1)".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `Σ_{j>stage} 2^{j-1}/d(j)` in closed form; `None` for explicit schedules.
    pub fn tail_bound(&self, stage: usize) -> Option<Rational> {
        match self {
            ParameterSchedule::Geometric { coefficient, base } if *base >= 3 && *coefficient >= 1 => {
                // (1/2c) · (2/g)^{N+1} · g/(g-2)
                let g = BigInt::from(*base);
                let two_over_g = BigRational::new(BigInt::from(2), g.clone());
                let geometric = num_traits::pow(two_over_g, stage + 1);
                let head = BigRational::new(BigInt::one(), BigInt::from(2 * coefficient));
                let sum_factor = BigRational::new(g.clone(), g - 2);
                Some(head * geometric * sum_factor)
            }
            _ => None,
        }
    }
}

/// `d, l, r, s` and `s/r` for stages `0..=cap`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSequences {
    pub schedule: ParameterSchedule,
    pub cap: usize,
    #[serde(with = "exact::serde_biguint_vec")]
    pub d: Vec<BigUint>,
    #[serde(with = "exact::serde_biguint_vec")]
    pub l: Vec<BigUint>,
    #[serde(with = "exact::serde_biguint_vec")]
    pub r: Vec<BigUint>,
    #[serde(with = "exact::serde_biguint_vec")]
    pub s: Vec<BigUint>,
    #[serde(with = "exact::serde_rational_vec")]
    pub ratio: Vec<Rational>,
}

impl DerivedSequences {
    pub fn d(&self, n: usize) -> &BigUint {
        &self.d[n]
    }
    pub fn l(&self, n: usize) -> &BigUint {
        &self.l[n]
    }
    pub fn r(&self, n: usize) -> &BigUint {
        &self.r[n]
    }
    pub fn s(&self, n: usize) -> &BigUint {
        &self.s[n]
    }
    pub fn ratio(&self, n: usize) -> &Rational {
        &self.ratio[n]
    }

    pub fn require_stage(&self, stage: usize) -> Result<(), ScheduleError> {
        if stage > self.cap {
            Err(ScheduleError::StageBeyondCap {
                stage,
                cap: self.cap,
            })
        } else {
            Ok(())
        }
    }

    /// `r(m)/r(n)` for `n ≤ m`, which is always an integer.
    pub fn multiplicity(&self, n: usize, m: usize) -> BigUint {
        debug_assert!(n <= m);
        &self.r[m] / &self.r[n]
    }
}

pub fn derive_sequences(
    schedule: &ParameterSchedule,
    cap: usize,
) -> Result<DerivedSequences, ScheduleError> {
    schedule.check_parameters()?;
    let mut d = Vec::with_capacity(cap + 1);
    let mut l = Vec::with_capacity(cap + 1);
    let mut r = Vec::with_capacity(cap + 1);
    let mut s = Vec::with_capacity(cap + 1);
    let mut ratio = Vec::with_capacity(cap + 1);

    d.push(BigUint::one());
    l.push(BigUint::one());
    r.push(BigUint::one());
    s.push(BigUint::one());
    ratio.push(BigRational::one());

    for n in 1..=cap {
        let dn = schedule.d(n)?;
        let bound = pow2(n - 1);
        if dn <= bound {
            return Err(ScheduleError::GrowthViolation {
                stage: n,
                d: dn,
                bound,
            });
        }
        let ln = &dn + &bound;
        let rn = &r[n - 1] * &ln;
        let sn = &s[n - 1] * &dn;
        let next_ratio = ratio_of(&sn, &rn);
        debug_assert!(next_ratio < ratio[n - 1]);
        d.push(dn);
        l.push(ln);
        r.push(rn);
        s.push(sn);
        ratio.push(next_ratio);
    }

    Ok(DerivedSequences {
        schedule: schedule.clone(),
        cap,
        d,
        l,
        r,
        s,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub first_failing_stage: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub cap: usize,
    pub conditions: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| !c.passed)
    }
}

/// Checks every schedule condition up to `cap` without stopping at the
/// first failure.
pub fn validate_schedule(schedule: &ParameterSchedule, cap: usize) -> ValidationReport {
    let mut conditions = Vec::new();

    let params = schedule.check_parameters();
    conditions.push(ConditionCheck {
        name: "parameters".into(),
        passed: params.is_ok(),
        first_failing_stage: None,
        detail: match &params {
            Ok(()) => "schedule parameters well formed".into(),
            Err(e) => e.to_string(),
        },
    });

    let defined = match schedule.max_stage() {
        Some(len) if len < cap => ConditionCheck {
            name: "defined through cap".into(),
            passed: false,
            first_failing_stage: Some(len + 1),
            detail: format!("explicit prefix has {len} entries, cap is {cap}"),
        },
        _ => ConditionCheck {
            name: "defined through cap".into(),
            passed: true,
            first_failing_stage: None,
            detail: format!("d(n) defined for n ≤ {cap}"),
        },
    };
    let last = schedule.max_stage().map_or(cap, |len| len.min(cap));
    conditions.push(defined);

    conditions.push(ConditionCheck {
        name: "d(0) = 1".into(),
        passed: schedule.d(0).map(|v| v.is_one()).unwrap_or(false),
        first_failing_stage: None,
        detail: "fixed by convention".into(),
    });

    let values: Vec<BigUint> = (1..=last).filter_map(|n| schedule.d(n).ok()).collect();

    let growth_failure = values
        .iter()
        .enumerate()
        .map(|(i, dn)| (i + 1, dn))
        .find(|(n, dn)| **dn <= pow2(n - 1));
    conditions.push(ConditionCheck {
        name: "d(n) > 2^(n-1)".into(),
        passed: growth_failure.is_none(),
        first_failing_stage: growth_failure.map(|(n, _)| n),
        detail: match growth_failure {
            None => format!("holds for 1 ≤ n ≤ {last}"),
            Some((n, dn)) => format!("d({n}) = {dn} but 2^{} = {}", n - 1, pow2(n - 1)),
        },
    });

    // Ratio monotonicity, checked on the raw products so it is meaningful
    // even when the growth condition fails.
    let mut r = BigUint::one();
    let mut s = BigUint::one();
    let mut prev = BigRational::one();
    let mut mono_failure = None;
    for (i, dn) in values.iter().enumerate() {
        let n = i + 1;
        if dn.is_zero() {
            mono_failure = Some(n);
            break;
        }
        r *= dn + pow2(n - 1);
        s *= dn;
        let next = ratio_of(&s, &r);
        if next >= prev {
            mono_failure = Some(n);
            break;
        }
        prev = next;
    }
    conditions.push(ConditionCheck {
        name: "s(n)/r(n) strictly decreasing".into(),
        passed: mono_failure.is_none(),
        first_failing_stage: mono_failure,
        detail: match mono_failure {
            None => format!("ratio(n+1) < ratio(n) for n < {last}"),
            Some(n) => format!("ratio({n}) is not below ratio({})", n - 1),
        },
    });

    ValidationReport { cap, conditions }
}

/// Two-sided bound on κ = inf s(n)/r(n).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KappaInterval {
    #[serde(with = "exact::serde_rational")]
    pub lo: Rational,
    #[serde(with = "exact::serde_rational")]
    pub hi: Rational,
    pub stage_used: usize,
    #[serde(with = "exact::serde_rational")]
    pub tail_bound: Rational,
    /// False for explicit prefixes: `lo = hi` is then only the prefix infimum.
    pub certified: bool,
    pub lo_exceeds_half: bool,
}

impl KappaInterval {
    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }
}

pub fn kappa_interval(
    schedule: &ParameterSchedule,
    stage_used: usize,
) -> Result<KappaInterval, ScheduleError> {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    match schedule {
        ParameterSchedule::Geometric { .. } => {
            let seq = derive_sequences(schedule, stage_used)?;
            let hi = seq.ratio(stage_used).clone();
            let tail = schedule
                .tail_bound(stage_used)
                .expect("validated geometric schedule has a tail bound");
            if tail >= BigRational::one() {
                return Err(ScheduleError::TailNotCertifiable {
                    stage_used,
                    tail: exact::format_rational(&tail),
                });
            }
            let lo = &hi * (BigRational::one() - &tail);
            let lo_exceeds_half = lo > half;
            Ok(KappaInterval {
                lo,
                hi,
                stage_used,
                tail_bound: tail,
                certified: true,
                lo_exceeds_half,
            })
        }
        ParameterSchedule::Explicit { d } => {
            let seq = derive_sequences(schedule, d.len())?;
            let value = seq.ratio(d.len()).clone();
            let lo_exceeds_half = value > half;
            Ok(KappaInterval {
                lo: value.clone(),
                hi: value,
                stage_used: d.len(),
                tail_bound: BigRational::zero(),
                certified: false,
                lo_exceeds_half,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use proptest::prelude::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn powers_of_ten_to_stage_three() {
        let seq = derive_sequences(&ParameterSchedule::powers_of_ten(), 3).unwrap();
        assert_eq!(seq.l, vec![big(1), big(11), big(102), big(1004)]);
        assert_eq!(*seq.r(3), big(1_126_488));
        assert_eq!(*seq.s(3), big(1_000_000));
    }

    #[test]
    fn first_ratio_of_powers_of_ten() {
        let seq = derive_sequences(&ParameterSchedule::powers_of_ten(), 1).unwrap();
        assert_eq!(*seq.ratio(1), rat(10, 11));
    }

    #[test]
    fn explicit_two_three_five() {
        let seq = derive_sequences(&ParameterSchedule::explicit([2, 3, 5]), 3).unwrap();
        assert_eq!(seq.l, vec![big(1), big(3), big(5), big(9)]);
        assert_eq!(seq.r, vec![big(1), big(3), big(15), big(135)]);
        assert_eq!(seq.s, vec![big(1), big(2), big(6), big(30)]);
    }

    #[test]
    fn growth_violation_names_stage() {
        let err = derive_sequences(&ParameterSchedule::explicit([2, 3, 4]), 3).unwrap_err();
        assert!(matches!(err, ScheduleError::GrowthViolation { stage: 3, .. }));
        let err = derive_sequences(&ParameterSchedule::explicit([2]), 2).unwrap_err();
        assert!(matches!(err, ScheduleError::BeyondPrefix { requested: 2, len: 1 }));
    }

    #[test]
    fn validation_reports() {
        assert!(validate_schedule(&ParameterSchedule::powers_of_ten(), 10).passed());

        let report = validate_schedule(&ParameterSchedule::explicit([2, 3, 4]), 3);
        let failure = report.first_failure().unwrap();
        assert_eq!(failure.name, "d(n) > 2^(n-1)");
        assert_eq!(failure.first_failing_stage, Some(3));
        // monotonicity still holds for (2,3,4)
        assert!(report.conditions.iter().any(|c| c.name.contains("decreasing") && c.passed));

        let report = validate_schedule(&ParameterSchedule::explicit([1, 5, 9]), 3);
        assert_eq!(report.first_failure().unwrap().first_failing_stage, Some(1));

        let report = validate_schedule(&ParameterSchedule::explicit([2, 3]), 3);
        assert_eq!(report.first_failure().unwrap().name, "defined through cap");

        let report = validate_schedule(&ParameterSchedule::geometric(1, 2), 3);
        assert!(!report.passed());
    }

    #[test]
    fn kappa_stage_zero_uses_empty_product() {
        let k = kappa_interval(&ParameterSchedule::powers_of_ten(), 0).unwrap();
        assert_eq!(k.hi, rat(1, 1));
        // Σ_{j≥1} 2^{j-1}/10^j = 1/8
        assert_eq!(k.tail_bound, rat(1, 8));
        assert_eq!(k.lo, rat(7, 8));
    }

    #[test]
    fn kappa_stage_one_matches_direct_sum() {
        let k = kappa_interval(&ParameterSchedule::powers_of_ten(), 1).unwrap();
        assert_eq!(k.hi, rat(10, 11));
        // direct partial sums of 2^{j-1}/10^j for j ≥ 2 converge to 1/40 from below
        let mut partial = BigRational::zero();
        for j in 2..60 {
            partial += rat(BigInt::from(pow2(j - 1)), BigInt::from(num_traits::pow(big(10), j)));
        }
        assert!(partial < k.tail_bound);
        assert!(&k.tail_bound - &partial < rat(1, BigInt::from(10u32).pow(40)));
        assert_eq!(k.tail_bound, rat(1, 40));
        assert_eq!(k.lo, rat(10, 11) * rat(39, 40));
    }

    #[test]
    fn kappa_not_certifiable_when_tail_large() {
        let err = kappa_interval(&ParameterSchedule::geometric(1, 3), 0).unwrap_err();
        assert!(matches!(err, ScheduleError::TailNotCertifiable { .. }));
        assert!(kappa_interval(&ParameterSchedule::geometric(1, 3), 3).is_ok());
    }

    #[test]
    fn explicit_kappa_is_flagged() {
        let k = kappa_interval(&ParameterSchedule::explicit([2, 3, 5]), 6).unwrap();
        assert!(!k.certified);
        assert_eq!(k.lo, rat(30, 135));
        assert_eq!(k.stage_used, 3);
        assert!(!k.lo_exceeds_half);
    }

    #[test]
    fn product_and_recurrence_agree() {
        let seq = derive_sequences(&ParameterSchedule::powers_of_ten(), 12).unwrap();
        for n in 0..=12 {
            let by_product: BigUint = (0..=n).map(|j| seq.l(j).clone()).product();
            assert_eq!(&by_product, seq.r(n));
        }
    }

    proptest! {
        #[test]
        fn kappa_interval_brackets_ratios(c in 1u64..5, g in 3u64..13, stage in 0usize..7) {
            let schedule = ParameterSchedule::geometric(c, g);
            if let Ok(k) = kappa_interval(&schedule, stage) {
                prop_assert!(k.lo <= k.hi);
                let seq = derive_sequences(&schedule, 2 * stage + 2).unwrap();
                for m in 0..=(2 * stage + 2) {
                    prop_assert!(k.lo <= *seq.ratio(m));
                    if m >= stage {
                        prop_assert!(k.hi >= *seq.ratio(m));
                    }
                }
            }
        }

        #[test]
        fn ratio_strictly_decreasing(d in proptest::collection::vec(1u64..1000, 1..8)) {
            let d: Vec<u64> = d.iter().enumerate().map(|(i, v)| v + (1u64 << i)).collect();
            let schedule = ParameterSchedule::explicit(d.clone());
            let seq = derive_sequences(&schedule, d.len()).unwrap();
            for n in 1..=d.len() {
                prop_assert!(seq.ratio(n) < seq.ratio(n - 1));
                let stepped = seq.ratio(n - 1) * ratio_of(seq.d(n), seq.l(n));
                prop_assert_eq!(&stepped, seq.ratio(n));
            }
        }
    }
}
