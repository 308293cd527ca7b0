//! `qrlob`: ingest raw book data, calibrate queue-reactive and Hawkes models,
//! simulate them and score simulated against real flow.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qrlob::model::ModelVariant;

use crate::commands::parse_variant;
use crate::config::Config;
use crate::error::{CliError, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "qrlob", version, about = "Queue-reactive order book calibration and simulation")]
struct Cli {
    /// TOML config; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rebuild the L/C/M event flow from raw snapshots and trades.
    Ingest(IngestArgs),
    /// Print per-level event statistics of event logs.
    Analyze(AnalyzeArgs),
    /// Calibrate a model from event logs.
    Calibrate(CalibrateArgs),
    /// Simulate a calibrated model.
    Simulate(SimulateArgs),
    /// Score a simulated log against a real one.
    #[command(alias = "compare")]
    Report(ReportArgs),
    /// Ingest, calibrate, simulate and report in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct IngestOverrides {
    #[arg(long)]
    tick_size: Option<f64>,
    /// Levels reconstructed per side.
    #[arg(long)]
    depth: Option<usize>,
    /// Tolerated timestamp regression; larger ones are errors.
    #[arg(long)]
    regression_tolerance_ns: Option<i64>,
}

#[derive(Debug, Args)]
struct CalibrateOverrides {
    #[arg(long, value_parser = parse_variant)]
    variant: Option<ModelVariant>,
    /// Levels per side in the model.
    #[arg(long)]
    levels: Option<usize>,
    /// Trading session, `HH:MM-HH:MM` UTC.
    #[arg(long)]
    session: Option<String>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    ingest: IngestOverrides,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    session: Option<String>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Event logs, one or more.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    calibrate: CalibrateOverrides,
    /// Fix θ instead of fitting it.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the model's own variant.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<ModelVariant>,
    /// Seconds of simulated time.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Replicas with seeds seed, seed+1, ...; outputs become `<stem>-<seed>.<ext>`.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    sim: PathBuf,
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Raw CSV or an event log.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    ingest: IngestOverrides,
    #[command(flatten)]
    calibrate: CalibrateOverrides,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl IngestOverrides {
    fn apply(&self, cfg: &mut Config) {
        if let Some(t) = self.tick_size {
            cfg.ingest.tick_size = t;
        }
        if let Some(d) = self.depth {
            cfg.ingest.depth = d;
        }
        if let Some(r) = self.regression_tolerance_ns {
            cfg.ingest.regression_tolerance_ns = r;
        }
    }
}

impl CalibrateOverrides {
    fn apply(&self, cfg: &mut Config) {
        if let Some(v) = self.variant {
            cfg.calibrate.variant = v;
        }
        if let Some(l) = self.levels {
            cfg.calibrate.levels = l;
        }
        if let Some(s) = &self.session {
            cfg.calibrate.session = s.clone();
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => {
            a.ingest.apply(&mut cfg);
            commands::ingest(&cfg, &a.input, &a.out)
        }
        Command::Analyze(a) => {
            if let Some(l) = a.levels {
                cfg.calibrate.levels = l;
            }
            if let Some(s) = a.session {
                cfg.calibrate.session = s;
            }
            commands::analyze(&cfg, &a.input)
        }
        Command::Calibrate(a) => {
            a.calibrate.apply(&mut cfg);
            if a.theta.is_some() {
                cfg.calibrate.theta = a.theta;
            }
            commands::calibrate(&cfg, &a.input, &a.out)
        }
        Command::Simulate(a) => {
            if a.variant.is_some() {
                cfg.simulate.variant = a.variant;
            }
            if let Some(h) = a.horizon {
                cfg.simulate.horizon_s = h;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if a.theta.is_some() {
                cfg.simulate.theta = a.theta;
            }
            if let Some(r) = a.runs {
                cfg.simulate.runs = r;
            }
            commands::simulate(&cfg, &a.model, &a.out)
        }
        Command::Report(a) => commands::report(&cfg, &a.sim, &a.real, &a.out),
        Command::Pipeline(a) => {
            a.ingest.apply(&mut cfg);
            a.calibrate.apply(&mut cfg);
            if let Some(h) = a.horizon {
                cfg.simulate.horizon_s = h;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            commands::pipeline(&cfg, &a.input, &a.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::from(EXIT_OK)
        }
        Err(e) => {
            eprintln!("qrlob: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
