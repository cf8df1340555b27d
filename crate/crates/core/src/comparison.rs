//! Replayable certificate that the limit algebra fails ρ-comparison.
//!
//! The witness pair is the Bott class `b_m` and the pushed trivial class
//! `Γ_{m,n}(e)` of rank `M`. On the trace side `τ(Γ(e)) = M/r(n) > 1 + ρ =
//! τ(b_m) + ρ`; on the rank side `M·r(m)/r(n) < 2s(m)`, so `L^{×s(m)}` does
//! not fit and `b_m ⋠ Γ(e)`. The only input not derived exactly from the
//! schedule is κ, replaced by a certified lower bound `κ_lo`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{embeds_in_trivial, ObstructionCertificate};
use crate::exact::{self, format_rational, rat_from_uint, ratio_of, Rational};
use crate::schedule::{derive_sequences, DerivedSequences, KappaInterval, ScheduleError};
use crate::system::{self, ProjectionClass, SystemError};

pub const CERTIFICATE_SCHEMA: &str = "ahcert.comparison-certificate/1";
pub const DEFAULT_CHECK_DEPTH: usize = 6;

#[derive(Debug, Error)]
pub enum ComparisonError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("kappa interval is not certified (explicit prefix); no lower bound on every ratio is available")]
    KappaNotCertified,
    #[error("rho must be non-negative, got {0}")]
    NegativeRho(String),
    #[error("rho = {rho} is not below 2·kappa_lo − 1 = {bound}; raise the kappa stage")]
    OutOfRegime { rho: String, bound: String },
    #[error("no stage n ≤ {cap} has 1/r(n) < {gap}; raise the stage cap")]
    NoStage { cap: usize, gap: String },
    #[error("no integer M in the open window; this contradicts 1/r(n) < 2κ_lo − 1 − ρ")]
    EmptyWindow,
    #[error("m = {m} is below the certificate stage n = {n}")]
    StageBelowN { m: usize, n: usize },
    #[error("trace cross-check failed at m = {m}: pushed classes give {got}, expected {expected}")]
    TraceMismatch { m: usize, got: String, expected: String },
    #[error("certificate JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Lt,
    Le,
    Eq,
    /// Integer divisibility `lhs | rhs`.
    Divides,
}

impl Relation {
    fn evaluate(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Divides => {
                lhs.is_integer()
                    && rhs.is_integer()
                    && !lhs.is_zero()
                    && rhs.to_integer().is_multiple_of(&lhs.to_integer())
            }
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Divides => "|",
        }
    }
}

/// One exact comparison, stored with the values it was evaluated on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub label: String,
    #[serde(with = "exact::serde_rational")]
    pub lhs: Rational,
    pub relation: Relation,
    #[serde(with = "exact::serde_rational")]
    pub rhs: Rational,
    pub holds: bool,
}

impl TranscriptLine {
    fn new(label: impl Into<String>, lhs: Rational, relation: Relation, rhs: Rational) -> Self {
        let holds = relation.evaluate(&lhs, &rhs);
        TranscriptLine {
            label: label.into(),
            lhs,
            relation,
            rhs,
            holds,
        }
    }

    /// Re-evaluates the stored comparison.
    pub fn reevaluate(&self) -> bool {
        self.relation.evaluate(&self.lhs, &self.rhs)
    }
}

impl fmt::Display for TranscriptLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {} {} {}",
            if self.holds { "ok" } else { "FAIL" },
            self.label,
            format_rational(&self.lhs),
            self.relation.symbol(),
            format_rational(&self.rhs)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCheck {
    pub m: usize,
    /// Rank of `Γ_{m,n}(e)`, i.e. `M·r(m)/r(n)`.
    #[serde(with = "exact::serde_biguint")]
    pub rank: BigUint,
    pub lines: Vec<TranscriptLine>,
    pub obstruction: ObstructionCertificate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalArgument {
    /// `M/r(n) < 2κ_lo`.
    pub window: TranscriptLine,
    /// `κ_lo` is a certified lower bound, so `2κ_lo ≤ 2s(m)/r(m)` for all m.
    pub kappa_certified: bool,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonCertificate {
    pub schema: String,
    #[serde(with = "exact::serde_rational")]
    pub rho: Rational,
    pub kappa: KappaInterval,
    pub n: usize,
    #[serde(rename = "M", with = "exact::serde_biguint")]
    pub m_rank: BigUint,
    pub check_depth: usize,
    pub inequalities: Vec<TranscriptLine>,
    pub stages: Vec<StageCheck>,
    pub universal_argument: UniversalArgument,
}

impl ComparisonCertificate {
    pub fn to_json(&self) -> Result<String, ComparisonError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ComparisonError> {
        Ok(serde_json::from_str(s)?)
    }

    /// `M/r(n)`, the trace of `Γ_{m,n}(e)` at every later stage.
    pub fn trace_of_trivial(&self, seq: &DerivedSequences) -> Rational {
        ratio_of(&self.m_rank, seq.r(self.n))
    }
}

fn two() -> Rational {
    BigRational::from_integer(BigInt::from(2))
}

/// The lines that vouch for `κ_lo`, recomputed from the schedule.
fn kappa_lines(kappa: &KappaInterval, seq: &DerivedSequences) -> Result<Vec<TranscriptLine>, ComparisonError> {
    let schedule = &seq.schedule;
    let stage = kappa.stage_used;
    let ratio = derive_sequences(schedule, stage)?.ratio(stage).clone();
    let tail = schedule
        .tail_bound(stage)
        .ok_or(ComparisonError::KappaNotCertified)?;
    Ok(vec![
        TranscriptLine::new(
            format!("kappa.hi = s({stage})/r({stage})"),
            kappa.hi.clone(),
            Relation::Eq,
            ratio,
        ),
        TranscriptLine::new(
            format!("kappa.tail_bound = sum_{{j>{stage}}} 2^(j-1)/d(j)"),
            kappa.tail_bound.clone(),
            Relation::Eq,
            tail,
        ),
        TranscriptLine::new(
            "kappa.tail_bound < 1",
            kappa.tail_bound.clone(),
            Relation::Lt,
            BigRational::one(),
        ),
        TranscriptLine::new(
            "kappa.lo = kappa.hi * (1 - tail_bound)",
            kappa.lo.clone(),
            Relation::Eq,
            &kappa.hi * (BigRational::one() - &kappa.tail_bound),
        ),
    ])
}

/// Every stage-`n` line of the transcript for the choice `(n, M)`.
fn stage_lines(
    rho: &Rational,
    kappa_lo: &Rational,
    n: usize,
    m_rank: &BigUint,
    seq: &DerivedSequences,
) -> Vec<TranscriptLine> {
    let one = BigRational::one();
    let gap = kappa_lo * two() - &one - rho;
    let rn = rat_from_uint(seq.r(n));
    let trace = rat_from_uint(m_rank) / &rn;
    let mut lines = vec![
        TranscriptLine::new("rho >= 0", rho.clone(), Relation::Le, rho.abs()),
        TranscriptLine::new(
            "rho < 2*kappa_lo - 1",
            rho.clone(),
            Relation::Lt,
            kappa_lo * two() - &one,
        ),
        TranscriptLine::new(
            format!("1/r({n}) < 2*kappa_lo - 1 - rho"),
            one.clone() / &rn,
            Relation::Lt,
            gap.clone(),
        ),
    ];
    if n > 1 {
        lines.push(TranscriptLine::new(
            format!("2*kappa_lo - 1 - rho <= 1/r({}) (n minimal)", n - 1),
            gap,
            Relation::Le,
            one.clone() / rat_from_uint(seq.r(n - 1)),
        ));
    }
    lines.push(TranscriptLine::new(
        format!("rho + 1 < M/r({n})"),
        rho + &one,
        Relation::Lt,
        trace.clone(),
    ));
    let below = if m_rank.is_zero() {
        BigRational::zero()
    } else {
        rat_from_uint(&(m_rank - 1u32)) / &rn
    };
    lines.push(TranscriptLine::new(
        format!("(M-1)/r({n}) <= rho + 1 (M minimal)"),
        below,
        Relation::Le,
        rho + &one,
    ));
    lines.push(TranscriptLine::new(
        format!("M/r({n}) < 2*kappa_lo"),
        trace,
        Relation::Lt,
        kappa_lo * two(),
    ));
    lines
}

fn universal(kappa: &KappaInterval, n: usize, m_rank: &BigUint, seq: &DerivedSequences) -> UniversalArgument {
    let trace = ratio_of(m_rank, seq.r(n));
    UniversalArgument {
        window: TranscriptLine::new(
            format!("universal: M/r({n}) < 2*kappa_lo"),
            trace,
            Relation::Lt,
            &kappa.lo * two(),
        ),
        kappa_certified: kappa.certified,
        statement: "kappa_lo <= kappa <= s(m)/r(m) for every m, hence M*r(m)/r(n) < 2*s(m) for every m >= n"
            .into(),
    }
}

/// Per-stage checks for `m = n+1 ..= n+depth`, computed through the
/// class-propagation machinery of [`crate::system`].
fn stage_checks(
    rho: &Rational,
    n: usize,
    m_rank: &BigUint,
    seq: &DerivedSequences,
    depth: usize,
) -> Result<Vec<StageCheck>, ComparisonError> {
    if depth == 0 {
        return Ok(Vec::new());
    }
    seq.require_stage(n + depth)?;
    let expected_trace = ratio_of(m_rank, seq.r(n));
    let mut e = ProjectionClass::trivial(n, m_rank.clone())?;
    let mut b = system::bott_class(seq, n)?;
    let mut out = Vec::with_capacity(depth);
    for m in n + 1..=n + depth {
        let step = system::connecting_map(seq, m - 1)?;
        e = system::push_class(&e, &step, seq)?;
        b = system::push_class(&b, &step, seq)?;

        let product = m_rank * seq.r(m);
        let (rank, _) = product.div_rem(seq.r(n));
        let twice_s = seq.s(m) * 2u32;
        let trace_e = system::trace_of_class(&e, seq)?;
        let trace_b = system::trace_of_class(&b, seq)?;
        let lines = vec![
            TranscriptLine::new(
                format!("r({n}) | M*r({m})"),
                rat_from_uint(seq.r(n)),
                Relation::Divides,
                rat_from_uint(&product),
            ),
            TranscriptLine::new(
                format!("rank Gamma_{{{m},{n}}}(e) = M*r({m})/r({n}) < 2*s({m})"),
                rat_from_uint(&rank),
                Relation::Lt,
                rat_from_uint(&twice_s),
            ),
            TranscriptLine::new(
                format!("pushed rank of Gamma_{{{m},{n}}}(e) = M*r({m})/r({n})"),
                rat_from_uint(&e.rank()?),
                Relation::Eq,
                rat_from_uint(&rank),
            ),
            TranscriptLine::new(
                format!("tau(Gamma_{{{m},{n}}}(e)) = M/r({n})"),
                trace_e.clone(),
                Relation::Eq,
                expected_trace.clone(),
            ),
            TranscriptLine::new(
                format!("tau(b_{m}) = 1"),
                trace_b.clone(),
                Relation::Eq,
                BigRational::one(),
            ),
            TranscriptLine::new(
                format!("tau(b_{m}) + rho < tau(Gamma_{{{m},{n}}}(e))"),
                &trace_b + rho,
                Relation::Lt,
                trace_e,
            ),
        ];
        out.push(StageCheck {
            m,
            obstruction: embeds_in_trivial(seq.s(m), &rank),
            rank,
            lines,
        });
    }
    Ok(out)
}

pub fn certify(
    rho: &Rational,
    seq: &DerivedSequences,
    kappa: &KappaInterval,
) -> Result<ComparisonCertificate, ComparisonError> {
    certify_with_depth(rho, seq, kappa, DEFAULT_CHECK_DEPTH)
}

/// Picks the smallest `n` with `1/r(n) < 2κ_lo − 1 − ρ` and the smallest
/// `M` with `ρ + 1 < M/r(n) < 2κ_lo`, then records the full transcript.
pub fn certify_with_depth(
    rho: &Rational,
    seq: &DerivedSequences,
    kappa: &KappaInterval,
    check_depth: usize,
) -> Result<ComparisonCertificate, ComparisonError> {
    if !kappa.certified {
        return Err(ComparisonError::KappaNotCertified);
    }
    if rho.is_negative() {
        return Err(ComparisonError::NegativeRho(format_rational(rho)));
    }
    let one = BigRational::one();
    let bound = &kappa.lo * two() - &one;
    if *rho >= bound {
        return Err(ComparisonError::OutOfRegime {
            rho: format_rational(rho),
            bound: format_rational(&bound),
        });
    }
    let gap = &bound - rho;
    let n = (1..=seq.cap)
        .find(|&n| one.clone() / rat_from_uint(seq.r(n)) < gap)
        .ok_or_else(|| ComparisonError::NoStage {
            cap: seq.cap,
            gap: format_rational(&gap),
        })?;

    let rn = rat_from_uint(seq.r(n));
    let scaled = (rho + &one) * &rn;
    let m_int: BigInt = scaled.floor().to_integer() + 1;
    let m_rank = m_int.to_biguint().ok_or(ComparisonError::EmptyWindow)?;
    if !(rat_from_uint(&m_rank) / &rn < &kappa.lo * two()) {
        return Err(ComparisonError::EmptyWindow);
    }

    let mut inequalities = kappa_lines(kappa, seq)?;
    inequalities.extend(stage_lines(rho, &kappa.lo, n, &m_rank, seq));
    let stages = stage_checks(rho, n, &m_rank, seq, check_depth)?;
    let universal_argument = universal(kappa, n, &m_rank, seq);

    Ok(ComparisonCertificate {
        schema: CERTIFICATE_SCHEMA.into(),
        rho: rho.clone(),
        kappa: kappa.clone(),
        n,
        m_rank,
        check_depth,
        inequalities,
        stages,
        universal_argument,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayLine {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub passed: bool,
    pub check_depth: usize,
    pub lines: Vec<ReplayLine>,
}

impl ReplayReport {
    pub fn failures(&self) -> impl Iterator<Item = &ReplayLine> {
        self.lines.iter().filter(|l| !l.passed)
    }

    pub fn first_failure(&self) -> Option<&ReplayLine> {
        self.failures().next()
    }
}

fn check_recomputed(
    out: &mut Vec<ReplayLine>,
    recomputed: &TranscriptLine,
    recorded: Option<&TranscriptLine>,
) {
    let holds = recomputed.reevaluate();
    let detail = recomputed.to_string();
    out.push(ReplayLine {
        label: recomputed.label.clone(),
        passed: holds,
        detail,
    });
    match recorded {
        Some(r) if r == recomputed => {}
        Some(r) => out.push(ReplayLine {
            label: format!("recorded line matches: {}", recomputed.label),
            passed: false,
            detail: format!("recorded {r}, recomputed {recomputed}"),
        }),
        None => out.push(ReplayLine {
            label: format!("recorded line present: {}", recomputed.label),
            passed: false,
            detail: "missing from certificate".into(),
        }),
    }
}

/// Re-derives every line from `(ρ, κ, n, M)` and the schedule, checks that
/// each holds, and that the certificate records exactly those lines.
pub fn replay(
    cert: &ComparisonCertificate,
    seq: &DerivedSequences,
    check_depth: usize,
) -> ReplayReport {
    let mut lines = Vec::new();
    let mut push = |label: &str, passed: bool, detail: String| {
        lines.push(ReplayLine {
            label: label.into(),
            passed,
            detail,
        })
    };

    push(
        "schema",
        cert.schema == CERTIFICATE_SCHEMA,
        format!("{} (expected {CERTIFICATE_SCHEMA})", cert.schema),
    );
    push(
        "kappa certified",
        cert.kappa.certified && cert.universal_argument.kappa_certified,
        format!("certified flag {}", cert.kappa.certified),
    );
    push(
        "kappa.lo > 1/2 flag",
        cert.kappa.lo_exceeds_half == (cert.kappa.lo > exact::rat(1, 2)),
        format!("recorded {}", cert.kappa.lo_exceeds_half),
    );
    if let Err(e) = seq.require_stage(cert.n) {
        push("stage n within cap", false, e.to_string());
        return finish(lines, check_depth);
    }

    match kappa_lines(&cert.kappa, seq) {
        Ok(recomputed) => {
            for (i, line) in recomputed.iter().enumerate() {
                check_recomputed(&mut lines, line, cert.inequalities.get(i));
            }
            let offset = recomputed.len();
            let stage = stage_lines(&cert.rho, &cert.kappa.lo, cert.n, &cert.m_rank, seq);
            for (i, line) in stage.iter().enumerate() {
                check_recomputed(&mut lines, line, cert.inequalities.get(offset + i));
            }
            let expected_len = offset + stage.len();
            if cert.inequalities.len() != expected_len {
                lines.push(ReplayLine {
                    label: "transcript length".into(),
                    passed: false,
                    detail: format!("{} lines, expected {expected_len}", cert.inequalities.len()),
                });
            }
        }
        Err(e) => lines.push(ReplayLine {
            label: "kappa tail bound".into(),
            passed: false,
            detail: e.to_string(),
        }),
    }

    let uni = universal(&cert.kappa, cert.n, &cert.m_rank, seq);
    check_recomputed(&mut lines, &uni.window, Some(&cert.universal_argument.window));
    lines.push(ReplayLine {
        label: "universal statement".into(),
        passed: uni.statement == cert.universal_argument.statement,
        detail: cert.universal_argument.statement.clone(),
    });
    let recorded_ms: Vec<usize> = cert.stages.iter().map(|s| s.m).collect();
    let expected_ms: Vec<usize> = (cert.n + 1..=cert.n + cert.check_depth).collect();
    lines.push(ReplayLine {
        label: "recorded stages are n+1 ..= n+check_depth".into(),
        passed: recorded_ms == expected_ms,
        detail: format!("recorded {recorded_ms:?}"),
    });

    match stage_checks(&cert.rho, cert.n, &cert.m_rank, seq, check_depth) {
        Ok(stages) => {
            for check in &stages {
                let recorded = cert.stages.iter().find(|s| s.m == check.m);
                for (i, line) in check.lines.iter().enumerate() {
                    check_recomputed(&mut lines, line, recorded.and_then(|r| r.lines.get(i)));
                }
                lines.push(ReplayLine {
                    label: format!("L^x s({}) does not embed in rank {}", check.m, check.rank),
                    passed: check.obstruction.is_obstructed(),
                    detail: check.obstruction.explanation(),
                });
                match recorded {
                    Some(r) if r == check => {}
                    Some(_) => lines.push(ReplayLine {
                        label: format!("recorded stage {} matches", check.m),
                        passed: false,
                        detail: "rank or obstruction record differs from recomputation".into(),
                    }),
                    None if check.m <= cert.n + cert.check_depth => lines.push(ReplayLine {
                        label: format!("recorded stage {} present", check.m),
                        passed: false,
                        detail: "missing from certificate".into(),
                    }),
                    None => {}
                }
            }
        }
        Err(e) => lines.push(ReplayLine {
            label: "per-stage checks".into(),
            passed: false,
            detail: e.to_string(),
        }),
    }
    finish(lines, check_depth)
}

fn finish(lines: Vec<ReplayLine>, check_depth: usize) -> ReplayReport {
    ReplayReport {
        passed: lines.iter().all(|l| l.passed),
        check_depth,
        lines,
    }
}

/// `τ(Γ_{m,n}(e)) − τ(b_m)`, computed from pushed classes and checked
/// against `M/r(n) − 1`.
pub fn trace_gap(
    cert: &ComparisonCertificate,
    seq: &DerivedSequences,
    m: usize,
) -> Result<Rational, ComparisonError> {
    if m < cert.n {
        return Err(ComparisonError::StageBelowN { m, n: cert.n });
    }
    let e = ProjectionClass::trivial(cert.n, cert.m_rank.clone())?;
    let e_m = system::push_class(&e, &system::connecting_map_between(seq, cert.n, m)?, seq)?;
    let b_m = system::bott_class(seq, m)?;
    let gap = system::trace_of_class(&e_m, seq)? - system::trace_of_class(&b_m, seq)?;
    let expected = cert.trace_of_trivial(seq) - BigRational::one();
    if gap != expected {
        return Err(ComparisonError::TraceMismatch {
            m,
            got: format_rational(&gap),
            expected: format_rational(&expected),
        });
    }
    Ok(gap)
}

/// Convenience for reports: the certified lower bound `2κ_lo − 1` on the
/// radius of comparison, as a float.
pub fn radius_lower_bound(kappa: &KappaInterval) -> f64 {
    exact::to_f64(&(&kappa.lo * two() - BigRational::one()))
}
