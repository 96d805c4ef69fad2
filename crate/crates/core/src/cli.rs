//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on configuration or usage errors, 1 on
//! runtime errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, ExperimentConfig};
use crate::error::{Error, Result};
use crate::harness::{run_bandit, run_coverage, run_ellipsoid_check, run_info_gain, width_curves, Setup};
use crate::output::{self, unix_now};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "KBL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "kbl", version, about = "Kernelized bandit confidence-width experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cumulative regret of the configured policy.
    RunBandit(RunArgs),
    /// Coverage of every configured width schedule.
    RunCoverage(RunArgs),
    /// Confidence-ellipsoid coverage for the linear kernel.
    RunEllipsoid(RunArgs),
    /// Greedy maximal information-gain curve.
    InfoGain(RunArgs),
    /// Validate a config and print its canonical form.
    ValidateConfig(ConfigArgs),
    /// Print the tool version.
    Version,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config and KBL_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate count override.
    #[arg(long)]
    replicates: Option<usize>,
    /// Number of replicate worker threads.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    parallel: Option<u64>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn resolve(args: &RunArgs) -> std::result::Result<(ExperimentConfig, PathBuf), Failure> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(m) = args.replicates {
        if m == 0 {
            return Err(Failure::Config(
                ConfigError::Invalid {
                    key: "replicates",
                    reason: "must be at least 1".into(),
                }
                .to_string(),
            ));
        }
        config.replicates = m;
    }
    let dir = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, dir))
}

fn with_pool<T: Send>(parallel: Option<u64>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match parallel {
        None => job(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k as usize)
            .build()
            .map_err(|e| Error::InvalidParameter {
                name: "parallel",
                reason: e.to_string(),
            })?
            .install(job),
    }
}

fn execute(command: &str, args: &RunArgs) -> std::result::Result<PathBuf, Failure> {
    let (config, dir) = resolve(args)?;
    let started = unix_now();
    let files: Vec<(&str, String)> = with_pool(args.parallel, || {
        Ok(match command {
            "run-bandit" => {
                let run = run_bandit(&config)?;
                let widths = width_curves(&run.setup)?;
                vec![
                    ("regret.csv", output::regret_csv(&run)),
                    ("regret_summary.csv", output::regret_summary_csv(&run)),
                    ("posterior.csv", output::posterior_csv(&run)),
                    ("optima.csv", output::optima_csv(&run)),
                    ("widths.csv", output::widths_csv(&widths)),
                    ("functions.json", output::functions_json(run.traces.iter().map(|t| &t.function))?),
                ]
            }
            "run-coverage" => {
                let report = run_coverage(&config)?;
                let widths = width_curves(&report.setup)?;
                vec![
                    ("coverage.csv", output::coverage_csv(&report)),
                    ("coverage_summary.csv", output::coverage_summary_csv(&report)),
                    ("widths.csv", output::widths_csv(&widths)),
                    ("functions.json", output::functions_json(&report.functions)?),
                ]
            }
            "run-ellipsoid" => {
                let report = run_ellipsoid_check(&config)?;
                vec![("ellipsoid.csv", output::ellipsoid_csv(&report))]
            }
            "info-gain" => {
                let (domain, curve) = run_info_gain(&config)?;
                let setup = Setup::new(&config, true)?;
                vec![
                    ("info_gain.csv", output::info_gain_csv(&domain, &curve)),
                    ("widths.csv", output::widths_csv(&width_curves(&setup)?)),
                ]
            }
            _ => unreachable!("unknown subcommand {command}"),
        })
    })?;
    Ok(output::write_outputs(&dir, command, &config, started, &files)?)
}

/// Run the CLI on `argv` (including the program name) and return the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Version => {
            println!("kbl {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::ValidateConfig(a) => load_config(&a.config).map(|c| print!("{}", c.canonical())),
        Command::RunBandit(a) => execute("run-bandit", a).map(drop),
        Command::RunCoverage(a) => execute("run-coverage", a).map(drop),
        Command::RunEllipsoid(a) => execute("run-ellipsoid", a).map(drop),
        Command::InfoGain(a) => execute("info-gain", a).map(drop),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
