use std::fs;
use std::process::ExitCode;

use ahcert::comparison::{self, ComparisonCertificate};
use ahcert::diagram;
use ahcert::dynamics;
use ahcert::exact::{format_rational, to_f64};
use ahcert::pipeline::{self, RunConfig};
use ahcert::schedule::{self, DerivedSequences, ParameterSchedule};
use ahcert::system::{self, density, ProjectionClass};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "ahcert", version, about = "Exact checks and comparison certificates for a sphere-product inductive system")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Bundled configuration (paper-10n, tiny-235); the default when no --config is given.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// `d(n) = C·G^n`, given as `C,G`.
    #[arg(long, global = true, value_name = "C,G", conflicts_with = "explicit")]
    geometric: Option<String>,
    /// Explicit `d(1),…,d(N)`, comma separated.
    #[arg(long, global = true, value_name = "LIST")]
    explicit: Option<String>,
    #[arg(long, global = true)]
    stage_cap: Option<usize>,
    #[arg(long, global = true)]
    kappa_stage: Option<usize>,
    /// Exact rational, e.g. 1/2.
    #[arg(long, global = true)]
    rho: Option<String>,
    #[arg(long, global = true)]
    check_depth: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check every schedule condition up to the stage cap.
    Validate,
    /// Print d, l, r, s and s/r.
    Sequences,
    /// Certified interval for κ.
    Kappa,
    /// Symbolic intertwining check, with dense spot checks where small enough.
    Intertwine {
        #[arg(long)]
        max_stage: Option<usize>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Rokhlin towers and periodicity.
    Towers {
        #[arg(long)]
        max_stage: Option<usize>,
    },
    /// Push the Bott class forward and decompose it.
    Bott {
        #[arg(long)]
        max_stage: Option<usize>,
    },
    /// Produce a comparison certificate.
    Certify {
        #[arg(long)]
        out: Option<String>,
        /// Also print the transcript.
        #[arg(long)]
        transcript: bool,
    },
    /// Re-check a certificate file.
    Replay {
        certificate: String,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Covering-radius diagnostic for the evaluation points.
    Density {
        #[arg(long)]
        target_stage: Option<usize>,
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Graphviz stage diagram.
    Dot {
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long)]
        cross: bool,
        /// Plain chain without the group coordinate.
        #[arg(long)]
        chain: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Whole pipeline.
    Run {
        /// Report path, overriding the config.
        #[arg(long)]
        out: Option<String>,
        /// Transcript path, overriding the config.
        #[arg(long)]
        transcript: Option<String>,
        /// Record timings in the report.
        #[arg(long)]
        timing: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.to_string(),
    }
}

fn check_failure(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_FAIL,
        message: message.to_string(),
    }
}

fn parse_list(text: &str) -> Result<Vec<u64>, Failure> {
    text.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| config_error(format!("{text:?}: {e}"))))
        .collect()
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut config = match (&c.config, &c.preset) {
        (Some(_), Some(_)) => return Err(config_error("give either --config or --preset")),
        (Some(path), None) => RunConfig::from_file(path).map_err(config_error)?,
        (None, name) => RunConfig::preset(name.as_deref().unwrap_or("paper-10n")).map_err(config_error)?,
    };
    if let Some(g) = &c.geometric {
        match parse_list(g)?.as_slice() {
            [coef, base] => config.schedule = ParameterSchedule::geometric(*coef, *base),
            _ => return Err(config_error("--geometric takes C,G")),
        }
    }
    if let Some(list) = &c.explicit {
        config.schedule = ParameterSchedule::explicit(parse_list(list)?);
    }
    if let Some(v) = c.stage_cap {
        config.stage_cap = v;
    }
    if let Some(v) = c.kappa_stage {
        config.kappa_stage = v;
    }
    if let Some(v) = &c.rho {
        config.rho = v.clone();
    }
    if let Some(v) = c.check_depth {
        config.check_depth = v;
    }
    if let Some(v) = c.seed {
        config.seed = v;
    }
    if let Some(d) = &mut config.density {
        d.target_stage = d.target_stage.min(config.stage_cap);
        d.cutoff = d.cutoff.min(config.stage_cap);
    }
    config.kappa_stage = config.kappa_stage.min(config.stage_cap.max(1));
    config.rho_value().map_err(config_error)?;
    Ok(config)
}

fn derive(config: &RunConfig) -> Result<DerivedSequences, Failure> {
    schedule::derive_sequences(&config.schedule, config.stage_cap).map_err(check_failure)
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
    } else {
        print!("{}", text());
    }
}

fn write_file(path: &str, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| config_error(format!("writing {path}: {e}")))
}

fn verdict(passed: bool, what: &str) -> Result<(), Failure> {
    if passed {
        Ok(())
    } else {
        Err(check_failure(format!("{what} failed")))
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli.common)?;
    let json = cli.common.json;
    match cli.command {
        Command::Validate => {
            let report = schedule::validate_schedule(&config.schedule, config.stage_cap);
            emit(json, &report, || {
                report
                    .conditions
                    .iter()
                    .map(|c| format!("[{}] {}: {}\n", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail))
                    .collect()
            });
            verdict(report.passed(), "validation")
        }
        Command::Sequences => {
            let seq = derive(&config)?;
            emit(json, &seq, || {
                (0..=seq.cap)
                    .map(|n| {
                        format!(
                            "n={n} d={} l={} r={} s={} s/r={:.12}\n",
                            seq.d(n),
                            seq.l(n),
                            seq.r(n),
                            seq.s(n),
                            to_f64(seq.ratio(n))
                        )
                    })
                    .collect()
            });
            Ok(())
        }
        Command::Kappa => {
            let k = schedule::kappa_interval(&config.schedule, config.kappa_stage).map_err(check_failure)?;
            emit(json, &k, || {
                format!(
                    "kappa in [{:.10}, {:.10}] at stage {}, width {:e}, certified {}\nlo = {}\n",
                    to_f64(&k.lo),
                    to_f64(&k.hi),
                    k.stage_used,
                    to_f64(&k.width()),
                    k.certified,
                    format_rational(&k.lo)
                )
            });
            Ok(())
        }
        Command::Intertwine { max_stage, samples } => {
            let seq = derive(&config)?;
            let top = max_stage
                .unwrap_or(pipeline::MAX_INTERTWINE_STAGE)
                .min(config.stage_cap.saturating_sub(1));
            let mut reports = Vec::new();
            let mut text = String::new();
            let mut ok = true;
            for n in 0..=top {
                let r = dynamics::verify_intertwine(&seq, n).map_err(check_failure)?;
                ok &= r.passed();
                let spot = dynamics::spot_check_intertwine(&seq, n, config.seed, samples).ok();
                text.push_str(&format!(
                    "[{}] n={n}: {} slots, identity {}, layout {}{}\n",
                    if r.passed() { "ok  " } else { "FAIL" },
                    r.slots,
                    r.identity_holds,
                    r.layout_conforms,
                    spot.as_ref()
                        .map(|s| format!(", spot check {:e} over {} samples", s.max_deviation, s.samples))
                        .unwrap_or_default()
                ));
                reports.push((r, spot));
            }
            emit(json, &reports, || text);
            verdict(ok, "intertwining")
        }
        Command::Towers { max_stage } => {
            let seq = derive(&config)?;
            let top = max_stage.unwrap_or(pipeline::MAX_TOWER_STAGE).min(config.stage_cap);
            let mut out = Vec::new();
            let mut ok = true;
            for n in 1..=top {
                let aut = dynamics::build_automorphism(&seq, n).map_err(check_failure)?;
                let tower = dynamics::rokhlin_tower(&seq, n).map_err(check_failure)?;
                let t = dynamics::verify_tower(&tower, &aut);
                let p = dynamics::check_periodicity(&aut);
                ok &= t.passed() && p.passed();
                out.push((t, p));
            }
            emit(json, &out, || {
                out.iter()
                    .map(|(t, p)| {
                        format!(
                            "[{}] n={}: length {}, order(u_n) = {}, order(alpha_n) = {}\n",
                            if t.passed() && p.passed() { "ok  " } else { "FAIL" },
                            t.stage,
                            t.length,
                            p.unitary_order,
                            p.automorphism_order
                        )
                    })
                    .collect()
            });
            verdict(ok, "towers")
        }
        Command::Bott { max_stage } => {
            let seq = derive(&config)?;
            let top = max_stage.unwrap_or(pipeline::MAX_TOWER_STAGE).min(config.stage_cap);
            let mut class = ProjectionClass::bott();
            let mut out = Vec::new();
            for m in 1..=top {
                let g = system::connecting_map(&seq, m - 1).map_err(check_failure)?;
                class = system::push_class(&class, &g, &seq).map_err(check_failure)?;
                out.push(system::bott_decomposition(&class, &seq).map_err(check_failure)?);
            }
            let ok = out.iter().all(|d| d.matches_expected);
            emit(json, &out, || {
                out.iter()
                    .map(|d| {
                        format!(
                            "[{}] m={}: {} line atoms + trivial rank {} in each of {} components\n",
                            if d.matches_expected { "ok  " } else { "FAIL" },
                            d.stage,
                            d.line_atoms,
                            d.trivial_rank,
                            d.components_checked
                        )
                    })
                    .collect()
            });
            verdict(ok, "bott decomposition")
        }
        Command::Certify { out, transcript } => {
            let seq = derive(&config)?;
            let kappa = schedule::kappa_interval(&config.schedule, config.kappa_stage).map_err(check_failure)?;
            let rho = config.rho_value().map_err(config_error)?;
            let cert = comparison::certify_with_depth(&rho, &seq, &kappa, config.check_depth)
                .map_err(check_failure)?;
            let body = cert.to_json().map_err(check_failure)?;
            if let Some(path) = out.as_ref().or(config.output.certificate.as_ref()) {
                write_file(path, &body)?;
            }
            if json {
                println!("{body}");
            } else {
                println!("n = {}, M = {}", cert.n, cert.m_rank);
                if transcript {
                    for line in cert.inequalities.iter().chain(cert.stages.iter().flat_map(|s| &s.lines)) {
                        println!("{line}");
                    }
                    println!("{}", cert.universal_argument.window);
                }
            }
            Ok(())
        }
        Command::Replay { certificate, depth } => {
            let seq = derive(&config)?;
            let text = fs::read_to_string(&certificate)
                .map_err(|e| config_error(format!("reading {certificate}: {e}")))?;
            let cert = ComparisonCertificate::from_json(&text).map_err(config_error)?;
            let report = comparison::replay(&cert, &seq, depth.unwrap_or(cert.check_depth));
            emit(json, &report, || {
                report
                    .lines
                    .iter()
                    .map(|l| format!("[{}] {}: {}\n", if l.passed { "ok  " } else { "FAIL" }, l.label, l.detail))
                    .collect()
            });
            verdict(report.passed, "replay")
        }
        Command::Density {
            target_stage,
            cutoff,
            samples,
        } => {
            let seq = derive(&config)?;
            let base = config.density.clone();
            let target_stage = target_stage.or(base.as_ref().map(|d| d.target_stage)).unwrap_or(0);
            let cutoff = cutoff.or(base.as_ref().map(|d| d.cutoff)).unwrap_or(target_stage + 1);
            let samples = samples.or(base.as_ref().map(|d| d.samples)).unwrap_or(1000);
            let scheme_seed = base.and_then(|d| d.scheme_seed).unwrap_or(config.seed);
            let report = density::density_diagnostic(
                &density::PointScheme::new(scheme_seed),
                &seq,
                target_stage,
                cutoff,
                samples,
                config.seed,
            )
            .map_err(check_failure)?;
            emit(json, &report, || {
                report
                    .estimates
                    .iter()
                    .map(|e| {
                        format!(
                            "cutoff {}: {} points, covering radius {:.4} rad\n",
                            e.cutoff, e.evaluation_points, e.covering_radius
                        )
                    })
                    .collect()
            });
            Ok(())
        }
        Command::Dot {
            depth,
            cross,
            chain,
            out,
        } => {
            let seq = schedule::derive_sequences(&config.schedule, depth.max(1)).map_err(check_failure)?;
            let dot = if chain {
                diagram::emit_chain_dot(&seq, depth)
            } else {
                diagram::emit_dot(&seq, depth, cross)
            }
            .map_err(check_failure)?;
            match out.as_ref().or(config.output.dot.as_ref()) {
                Some(path) => write_file(path, &dot),
                None => {
                    print!("{dot}");
                    Ok(())
                }
            }
        }
        Command::Run {
            out,
            transcript,
            timing,
        } => {
            let mut config = config;
            config.timing |= timing;
            let report = pipeline::run(&config).map_err(config_error)?;
            let body = report.to_json();
            let text = pipeline::render_transcript(&report);
            if let Some(path) = out.as_ref().or(config.output.report.as_ref()) {
                write_file(path, &body)?;
            }
            if let Some(path) = transcript.as_ref().or(config.output.transcript.as_ref()) {
                write_file(path, &text)?;
            }
            if json {
                println!("{body}");
            } else {
                print!("{text}");
            }
            verdict(report.passed, "run")
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ahcert: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
