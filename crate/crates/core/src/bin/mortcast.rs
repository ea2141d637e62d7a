use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mortcast::model::SexMode;
use mortcast::pipeline::{Pipeline, PipelineError, RunConfig, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Verb {
    Ingest,
    Fit,
    Loo,
    Stack,
    Forecast,
    Assess,
    /// Every stage in order.
    Run,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Joint,
}

/// Bayesian mortality forecasting: GAM + logistic old-age model, NUTS, LOO stacking.
#[derive(Debug, Parser)]
#[command(name = "mortcast", version)]
struct Cli {
    verb: Verb,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated transition ages, e.g. 80,85,90.
    #[arg(long, value_delimiter = ',')]
    menu: Option<Vec<u32>>,
    #[arg(long, value_enum)]
    sex_mode: Option<Mode>,
    /// First held-back year; later years are scored, not fitted.
    #[arg(long)]
    holdback_from: Option<i32>,
    /// Skip stages (and menu fits) whose outputs already exist.
    #[arg(long)]
    resume: bool,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output = o;
    }
    if let Some(m) = cli.menu {
        cfg.menu = m;
    }
    if let Some(m) = cli.sex_mode {
        cfg.sex_mode = match m {
            Mode::Single => SexMode::Single,
            Mode::Joint => SexMode::Joint,
        };
    }
    if let Some(h) = cli.holdback_from {
        cfg.holdback_from = Some(h);
    }
    let mut p = Pipeline::new(cfg, cli.resume)?;
    match cli.verb {
        Verb::Run => p.run_all(),
        Verb::Ingest => p.run_stage(Stage::Ingest),
        Verb::Fit => p.run_stage(Stage::Fit),
        Verb::Loo => p.run_stage(Stage::Loo),
        Verb::Stack => p.run_stage(Stage::Stack),
        Verb::Forecast => p.run_stage(Stage::Forecast),
        Verb::Assess => p.run_stage(Stage::Assess),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
