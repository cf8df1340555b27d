//! Run configuration and the end-to-end pipeline behind the `run` command.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{self, ComparisonCertificate, ComparisonError, ReplayReport};
use crate::dynamics::{self, IntertwineReport, PeriodicityReport, SpotCheckReport, TowerReport};
use crate::exact::{self, format_rational, parse_rational, Rational};
use crate::schedule::{self, DerivedSequences, KappaInterval, ParameterSchedule, ValidationReport};
use crate::system::density::{self, DensityReport, PointScheme};
use crate::system::{self, BottDecomposition};

pub const REPORT_SCHEMA: &str = "ahcert.run-report/1";

/// Largest `n` whose intertwining identity the pipeline checks.
pub const MAX_INTERTWINE_STAGE: usize = 8;
/// Largest tower length exponent the pipeline checks.
pub const MAX_TOWER_STAGE: usize = 10;

pub const PRESETS: &[(&str, &str)] = &[
    ("paper-10n", include_str!("../../../configs/paper-10n.toml")),
    ("tiny-235", include_str!("../../../configs/tiny-235.toml")),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown preset {0:?}; available: paper-10n, tiny-235")]
    UnknownPreset(String),
    #[error("rho {0:?} is not a rational number")]
    BadRho(String),
    #[error("{what} = {stage} exceeds stage_cap = {cap}")]
    StageAboveCap { what: &'static str, stage: usize, cap: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub target_stage: usize,
    pub cutoff: usize,
    pub samples: usize,
    /// Seed of the point scheme; the run seed when absent.
    #[serde(default)]
    pub scheme_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<String>,
    pub transcript: Option<String>,
    pub certificate: Option<String>,
    pub dot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub schedule: ParameterSchedule,
    pub stage_cap: usize,
    pub kappa_stage: usize,
    /// Exact rational, e.g. `"1/2"`.
    pub rho: String,
    #[serde(default = "default_depth")]
    pub check_depth: usize,
    pub seed: u64,
    #[serde(default = "default_spot_samples")]
    pub spot_check_samples: usize,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Record wall-clock timings; off by default so reports are reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn default_depth() -> usize {
    comparison::DEFAULT_CHECK_DEPTH
}

fn default_spot_samples() -> usize {
    100
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ConfigError::UnknownPreset(name.into()))
            .and_then(|(_, text)| Self::from_toml(text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn rho_value(&self) -> Result<Rational, ConfigError> {
        parse_rational(&self.rho).ok_or_else(|| ConfigError::BadRho(self.rho.clone()))
    }

    /// Stage references that must not exceed `stage_cap`.
    pub fn check_stages(&self) -> Result<(), ConfigError> {
        let cap = self.stage_cap;
        let mut refs = vec![("kappa_stage", self.kappa_stage)];
        if let Some(d) = &self.density {
            refs.push(("density.target_stage", d.target_stage));
            refs.push(("density.cutoff", d.cutoff));
        }
        for (what, stage) in refs {
            if stage > cap {
                return Err(ConfigError::StageAboveCap { what, stage, cap });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub n: usize,
    pub d: String,
    pub l: String,
    pub r: String,
    pub s: String,
    pub ratio: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntertwineEntry {
    pub report: IntertwineReport,
    pub spot_check: Option<SpotCheckReport>,
    pub spot_check_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerEntry {
    pub tower: TowerReport,
    pub periodicity: PeriodicityReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    Certified,
    Failed,
    /// κ is not certified for explicit prefixes, so no certificate applies.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateSection {
    pub status: CertificateStatus,
    pub note: Option<String>,
    pub certificate: Option<ComparisonCertificate>,
    pub replay: Option<ReplayReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub check: String,
    pub passed: bool,
    /// Diagnostics are reported but never change the exit status.
    pub gating: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phase: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub name: Option<String>,
    pub schedule: ParameterSchedule,
    pub stage_cap: usize,
    #[serde(with = "exact::serde_rational")]
    pub rho: Rational,
    pub seed: u64,
    pub validation: ValidationReport,
    pub sequences: Vec<SequenceRow>,
    pub kappa: Option<KappaInterval>,
    pub intertwining: Vec<IntertwineEntry>,
    pub towers: Vec<TowerEntry>,
    pub bott: Vec<BottDecomposition>,
    pub certificate: Option<CertificateSection>,
    pub density: Option<DensityReport>,
    pub notes: Vec<String>,
    pub verdicts: Vec<CheckVerdict>,
    pub passed: bool,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<Vec<Timing>>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckVerdict> {
        self.verdicts.iter().filter(|v| v.gating && !v.passed)
    }
}

struct Clock {
    enabled: bool,
    last: Instant,
    phases: Vec<Timing>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock {
            enabled,
            last: Instant::now(),
            phases: Vec::new(),
        }
    }

    fn lap(&mut self, phase: &str) {
        if self.enabled {
            let now = Instant::now();
            self.phases.push(Timing {
                phase: phase.into(),
                millis: (now - self.last).as_secs_f64() * 1e3,
            });
            self.last = now;
        }
    }
}

fn sequence_table(seq: &DerivedSequences) -> Vec<SequenceRow> {
    (0..=seq.cap)
        .map(|n| SequenceRow {
            n,
            d: seq.d(n).to_string(),
            l: seq.l(n).to_string(),
            r: seq.r(n).to_string(),
            s: seq.s(n).to_string(),
            ratio: format_rational(seq.ratio(n)),
        })
        .collect()
}

/// Runs every stage of the pipeline. Errors are configuration errors; check
/// failures are recorded in the report and reflected in `exit_code`.
pub fn run(config: &RunConfig) -> Result<RunReport, ConfigError> {
    let rho = config.rho_value()?;
    config.check_stages()?;
    let mut clock = Clock::new(config.timing);
    let mut verdicts = Vec::new();
    let mut notes = Vec::new();
    let gate = |verdicts: &mut Vec<CheckVerdict>, check: String, passed: bool, detail: String| {
        verdicts.push(CheckVerdict {
            check,
            passed,
            gating: true,
            detail,
        })
    };

    let cap = config.stage_cap;
    let validation = schedule::validate_schedule(&config.schedule, cap);
    gate(
        &mut verdicts,
        "schedule validation".into(),
        validation.passed(),
        validation
            .first_failure()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .unwrap_or_else(|| format!("all conditions hold through stage {cap}")),
    );
    clock.lap("validate");

    let mut report = RunReport {
        schema: REPORT_SCHEMA.into(),
        name: config.name.clone(),
        schedule: config.schedule.clone(),
        stage_cap: cap,
        rho: rho.clone(),
        seed: config.seed,
        validation,
        sequences: Vec::new(),
        kappa: None,
        intertwining: Vec::new(),
        towers: Vec::new(),
        bott: Vec::new(),
        certificate: None,
        density: None,
        notes: Vec::new(),
        verdicts: Vec::new(),
        passed: false,
        exit_code: 1,
        timing: None,
    };

    let seq = match (report.validation.passed(), schedule::derive_sequences(&config.schedule, cap)) {
        (true, Ok(seq)) => seq,
        (_, Err(e)) => {
            notes.push(format!("pipeline stopped: {e}"));
            return Ok(finish(report, verdicts, notes, clock));
        }
        (false, _) => {
            notes.push("pipeline stopped after schedule validation".into());
            return Ok(finish(report, verdicts, notes, clock));
        }
    };
    report.sequences = sequence_table(&seq);
    clock.lap("derive");

    match schedule::kappa_interval(&config.schedule, config.kappa_stage) {
        Ok(k) => {
            gate(
                &mut verdicts,
                "kappa interval".into(),
                k.lo <= k.hi && (!k.certified || k.lo_exceeds_half),
                format!(
                    "[{}, {}] at stage {}, certified = {}",
                    exact::to_f64(&k.lo),
                    exact::to_f64(&k.hi),
                    k.stage_used,
                    k.certified
                ),
            );
            if !k.certified {
                notes.push("kappa is the prefix infimum of an explicit schedule and is not certified".into());
            }
            report.kappa = Some(k);
        }
        Err(e) => gate(&mut verdicts, "kappa interval".into(), false, e.to_string()),
    }
    clock.lap("kappa");

    for n in 0..=cap.saturating_sub(1).min(MAX_INTERTWINE_STAGE) {
        if cap == 0 {
            break;
        }
        match dynamics::verify_intertwine(&seq, n) {
            Ok(r) => {
                gate(
                    &mut verdicts,
                    format!("intertwining n = {n}"),
                    r.passed(),
                    match &r.first_mismatch {
                        Some(m) => format!("slot {} differs", m.slot),
                        None => format!("{} slots agree", r.slots),
                    },
                );
                let (spot_check, spot_check_note) =
                    match dynamics::spot_check_intertwine(&seq, n, config.seed, config.spot_check_samples) {
                        Ok(s) => {
                            verdicts.push(CheckVerdict {
                                check: format!("intertwining spot check n = {n}"),
                                passed: s.max_deviation <= 1e-9,
                                gating: false,
                                detail: format!("max deviation {:e} over {} samples", s.max_deviation, s.samples),
                            });
                            (Some(s), None)
                        }
                        Err(e) => (None, Some(e.to_string())),
                    };
                report.intertwining.push(IntertwineEntry {
                    report: r,
                    spot_check,
                    spot_check_note,
                });
            }
            Err(e) => gate(&mut verdicts, format!("intertwining n = {n}"), false, e.to_string()),
        }
    }
    clock.lap("intertwine");

    for n in 1..=cap.min(MAX_TOWER_STAGE) {
        let built = dynamics::build_automorphism(&seq, n)
            .and_then(|aut| Ok((dynamics::rokhlin_tower(&seq, n)?, aut)));
        match built {
            Ok((tower, aut)) => {
                let t = dynamics::verify_tower(&tower, &aut);
                let p = dynamics::check_periodicity(&aut);
                gate(
                    &mut verdicts,
                    format!("tower n = {n}"),
                    t.passed() && p.passed(),
                    format!("length {}, order(u_n) = {}", t.length, p.unitary_order),
                );
                report.towers.push(TowerEntry {
                    tower: t,
                    periodicity: p,
                });
            }
            Err(e) => gate(&mut verdicts, format!("tower n = {n}"), false, e.to_string()),
        }
    }
    clock.lap("towers");

    let mut class = system::ProjectionClass::bott();
    for m in 1..=cap.min(MAX_TOWER_STAGE) {
        let step = system::connecting_map(&seq, m - 1)
            .and_then(|g| system::push_class(&class, &g, &seq))
            .and_then(|c| Ok((system::bott_decomposition(&c, &seq)?, c)));
        match step {
            Ok((d, c)) => {
                gate(
                    &mut verdicts,
                    format!("bott decomposition m = {m}"),
                    d.matches_expected,
                    format!("{} line atoms + trivial rank {}", d.line_atoms, d.trivial_rank),
                );
                report.bott.push(d);
                class = c;
            }
            Err(e) => {
                gate(&mut verdicts, format!("bott decomposition m = {m}"), false, e.to_string());
                break;
            }
        }
    }
    clock.lap("bott");

    if let Some(kappa) = &report.kappa {
        let section = if !kappa.certified {
            CertificateSection {
                status: CertificateStatus::Skipped,
                note: Some("kappa not certified".into()),
                certificate: None,
                replay: None,
            }
        } else {
            match comparison::certify_with_depth(&rho, &seq, kappa, config.check_depth) {
                Ok(cert) => {
                    let replay = comparison::replay(&cert, &seq, config.check_depth);
                    gate(
                        &mut verdicts,
                        "comparison certificate".into(),
                        replay.passed,
                        format!(
                            "n = {}, M = {}, {} replay lines",
                            cert.n,
                            cert.m_rank,
                            replay.lines.len()
                        ),
                    );
                    CertificateSection {
                        status: if replay.passed {
                            CertificateStatus::Certified
                        } else {
                            CertificateStatus::Failed
                        },
                        note: None,
                        certificate: Some(cert),
                        replay: Some(replay),
                    }
                }
                Err(e) => {
                    gate(&mut verdicts, "comparison certificate".into(), false, e.to_string());
                    CertificateSection {
                        status: CertificateStatus::Failed,
                        note: Some(certify_hint(&e)),
                        certificate: None,
                        replay: None,
                    }
                }
            }
        };
        report.certificate = Some(section);
    }
    clock.lap("certify");

    if let Some(d) = &config.density {
        let scheme = PointScheme::new(d.scheme_seed.unwrap_or(config.seed));
        match density::density_diagnostic(&scheme, &seq, d.target_stage, d.cutoff, d.samples, config.seed) {
            Ok(r) => {
                let last = r.estimates.last().map(|e| e.covering_radius).unwrap_or(f64::NAN);
                let monotone = r
                    .estimates
                    .windows(2)
                    .all(|w| w[1].covering_radius <= w[0].covering_radius);
                verdicts.push(CheckVerdict {
                    check: "density diagnostic".into(),
                    passed: monotone,
                    gating: false,
                    detail: format!("covering radius {last:.4} rad at cutoff {}", d.cutoff),
                });
                report.density = Some(r);
            }
            Err(e) => notes.push(format!("density diagnostic skipped: {e}")),
        }
    }
    clock.lap("density");

    Ok(finish(report, verdicts, notes, clock))
}

fn certify_hint(e: &ComparisonError) -> String {
    match e {
        ComparisonError::Schedule(_) => "raise stage_cap to cover n + check_depth".into(),
        ComparisonError::OutOfRegime { .. } => "rho must lie below 2*kappa_lo - 1".into(),
        _ => e.to_string(),
    }
}

fn finish(mut report: RunReport, verdicts: Vec<CheckVerdict>, notes: Vec<String>, clock: Clock) -> RunReport {
    report.passed = verdicts.iter().filter(|v| v.gating).all(|v| v.passed);
    report.exit_code = if report.passed { 0 } else { 1 };
    report.verdicts = verdicts;
    report.notes = notes;
    if clock.enabled {
        report.timing = Some(clock.phases);
    }
    report
}

/// Plain-text summary: one line per verdict, then the certificate lines.
pub fn render_transcript(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "run {} (schema {})\n",
        report.name.as_deref().unwrap_or("<unnamed>"),
        report.schema
    ));
    out.push_str(&format!("rho = {}, stage cap = {}\n", format_rational(&report.rho), report.stage_cap));
    if let Some(k) = &report.kappa {
        out.push_str(&format!(
            "kappa in [{}, {}] (stage {}, certified {})\n",
            exact::to_f64(&k.lo),
            exact::to_f64(&k.hi),
            k.stage_used,
            k.certified
        ));
    }
    for v in &report.verdicts {
        let tag = match (v.passed, v.gating) {
            (true, _) => "ok  ",
            (false, true) => "FAIL",
            (false, false) => "warn",
        };
        out.push_str(&format!("[{tag}] {}: {}\n", v.check, v.detail));
    }
    if let Some(CertificateSection {
        certificate: Some(cert),
        ..
    }) = &report.certificate
    {
        out.push_str(&format!("certificate n = {}, M = {}\n", cert.n, cert.m_rank));
        for line in &cert.inequalities {
            out.push_str(&format!("  {line}\n"));
        }
        for stage in &cert.stages {
            for line in &stage.lines {
                out.push_str(&format!("  {line}\n"));
            }
            out.push_str(&format!("  {}\n", stage.obstruction.explanation()));
        }
        out.push_str(&format!("  {}\n", cert.universal_argument.window));
    }
    for n in &report.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out.push_str(&format!(
        "result: {} (exit {})\n",
        if report.passed { "PASS" } else { "FAIL" },
        report.exit_code
    ));
    out
}
