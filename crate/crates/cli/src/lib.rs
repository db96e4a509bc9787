//! `figopt`: declarative configs in, JSON reports and CSV plot data out.
//!
//! Flags override config fields, which override built-in defaults.

pub mod config;
pub mod error;
pub mod report;
pub mod reproduce;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use figdesign::diagnosis::fig_report;
use figdesign::optimizer::multistart;
use figdesign::par::Execution;
use figdesign::phi::{curve_csv, phi_curve, CurveGrid};

use crate::config::{Overrides, ProblemConfig};
pub use crate::error::CliError;
use crate::report::{to_json, DiagnoseReport, OptimizeReport};

#[derive(Debug, Parser)]
#[command(name = "figopt", version, about = "Expected Fisher information gain designs")]
pub struct Cli {
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write φ(d) along a grid as CSV (`d,phi`).
    PhiCurve {
        #[command(flatten)]
        common: Common,
        /// Grid as lo:hi:step.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Coordinate varied along the grid.
        #[arg(long, default_value_t = 0)]
        axis: usize,
        /// Comma-separated base point fixing the other coordinates (k > 1).
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
    },
    /// Multistart search for the maxima of φ.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Maxima, assembled design and parameter-redundancy diagnosis.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
    /// Run a built-in example and check its known results.
    Reproduce {
        /// One of rsm2, poisson, logistic-woods, compartmental.
        name: String,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Output directory (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the tensor quadrature rule of the prior as CSV.
    DumpRule {
        #[command(flatten)]
        common: Common,
    },
    /// Print the built-in config of an example.
    ShowConfig { name: String },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct OverrideArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub quad_order: Option<usize>,
    #[arg(long)]
    pub dedup_tol: Option<f64>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            starts: a.starts,
            quad_order: a.quad_order,
            dedup_tol: a.dedup_tol,
        }
    }
}

/// Parses `lo:hi:step`.
pub fn parse_grid(spec: &str) -> Result<CurveGrid, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("--grid expects lo:hi:step, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    CurveGrid::new(nums[0], nums[1], nums[2]).map_err(|e| CliError::Usage(e.to_string()))
}

fn load(common: &Common) -> Result<ProblemConfig, CliError> {
    let path = common.config.display().to_string();
    let text = fs::read_to_string(&common.config).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut cfg = ProblemConfig::parse(&text, &path)?;
    cfg.apply(&Overrides::from(&common.overrides));
    cfg.validate()
        .map_err(|e| CliError::Config(format!("{path} (after flags): {e}")))?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, body: &str) -> Result<Option<String>, CliError> {
    match out {
        Some(path) => {
            fs::write(path, body).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(None)
        }
        None => Ok(Some(body.to_string())),
    }
}

/// Runs a parsed command. Returns text destined for stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::PhiCurve {
            common,
            grid,
            axis,
            at,
        } => {
            let cfg = load(&common)?;
            let grid = parse_grid(&grid)?;
            let k = cfg.k();
            let base = match at {
                Some(s) => s
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::Usage(format!("--at expects {k} comma-separated numbers")))?,
                None if k == 1 => vec![cfg.space.bounds[0][0]],
                None => {
                    return Err(CliError::Usage(format!(
                        "model has k = {k} variables; fix the others with --at and pick --axis"
                    )))
                }
            };
            if base.len() != k || axis >= k {
                return Err(CliError::Usage(format!(
                    "--at needs {k} values and --axis must be below {k}"
                )));
            }
            let ev = cfg.evaluator()?;
            let rows = phi_curve(&ev, &grid, axis, &base, exec)?;
            Ok(emit(common.out.as_deref(), &curve_csv(&rows))?.unwrap_or_default())
        }
        Command::Optimize { common } => {
            let cfg = load(&common)?;
            let mut ocfg = cfg.optimizer_config();
            ocfg.execution = exec;
            let report = multistart(&cfg.evaluator()?, &cfg.design_space()?, &ocfg)?;
            let body = to_json(&OptimizeReport::new(&cfg, report));
            Ok(emit(common.out.as_deref(), &body)?.unwrap_or_default())
        }
        Command::Diagnose { common } => {
            let cfg = load(&common)?;
            let mut ocfg = cfg.optimizer_config();
            ocfg.execution = exec;
            let report = fig_report(&cfg.evaluator()?, &cfg.design_space()?, cfg.n, &ocfg, cfg.draws)?;
            let report = DiagnoseReport::new(&cfg, report);
            let body = to_json(&report);
            Ok(match emit(common.out.as_deref(), &body)? {
                Some(body) => body,
                None => format!("{}\n", report.verdict),
            })
        }
        Command::Reproduce {
            name,
            overrides,
            out,
        } => {
            let rep = reproduce::reproduce(&name, &Overrides::from(&overrides), exec)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let mut files = rep.files.clone();
            files.push((format!("{name}-report.json"), to_json(&rep.report)));
            for (file, body) in &files {
                emit(Some(&dir.join(file)), body)?;
            }
            let mut text = String::new();
            for a in &rep.report.assertions {
                let tag = if a.passed { "PASS" } else { "FAIL" };
                text.push_str(&format!("[{tag}] {name}: {} ({})\n", a.name, a.detail));
            }
            for (file, _) in &files {
                text.push_str(&format!("wrote {}\n", dir.join(file).display()));
            }
            if rep.report.passed {
                Ok(text)
            } else {
                Err(CliError::Assertion(text))
            }
        }
        Command::DumpRule { common } => {
            let cfg = load(&common)?;
            let rule = cfg.prior_spec()?.quadrature_rule(cfg.quad_order)?;
            Ok(emit(common.out.as_deref(), &rule.to_csv())?.unwrap_or_default())
        }
        Command::ShowConfig { name } => Ok(reproduce::builtin_config_text(&name)?.to_string()),
    }
}

/// Parses `args` (including the program name) and runs.
pub fn run_args<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}
