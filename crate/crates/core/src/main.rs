use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anchored_transfer::harness::{
    denoise_file, run_covariance_experiment, run_markov_experiment, ExperimentKind, ExperimentOutput, RunConfig,
};
use anchored_transfer::Result;

#[derive(Parser)]
#[command(name = "anchored-transfer", version, about = "Anchored low-rank plus sparse transfer estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spiked covariance study comparing transfer, non-transfer and PCA.
    Cov(Overrides),
    /// Markov transition study on a generated source/target pair.
    Markov(Overrides),
    /// Denoise a target matrix read from file.
    Denoise(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per sample size.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(kind: ExperimentKind, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::from_file(kind, path)?,
        None => RunConfig::new(kind),
    };
    if let Some(seed) = o.seed {
        if !cfg.set_seed(seed) {
            eprintln!("warning: --seed has no effect on `{kind}`");
        }
    }
    if let Some(trials) = o.trials {
        if !cfg.set_trials(trials) {
            eprintln!("warning: --trials has no effect on `{kind}`");
        }
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    if let Some(jobs) = o.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn report(out: &ExperimentOutput, cfg: &RunConfig) -> ExitCode {
    println!(
        "{} rows, {} of {} cells failed; results in {}",
        out.rows.len(),
        out.failures.len(),
        out.cells,
        cfg.out.display()
    );
    if out.too_many_failures() {
        eprintln!("error: more than 10% of trials failed; see failures.csv");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (kind, o) = match &cli.command {
        Command::Cov(o) => (ExperimentKind::Covariance, o),
        Command::Markov(o) => (ExperimentKind::Markov, o),
        Command::Denoise(o) => (ExperimentKind::Denoise, o),
    };
    let cfg = load(kind, o)?;
    init_logging(cfg.verbosity);
    match kind {
        ExperimentKind::Covariance => Ok(report(&run_covariance_experiment(&cfg)?, &cfg)),
        ExperimentKind::Markov => Ok(report(&run_markov_experiment(&cfg)?, &cfg)),
        ExperimentKind::Denoise => {
            let d = denoise_file(&cfg)?;
            println!(
                "{} after {} iterations; output in {}",
                if d.fit.converged { "converged" } else { "stopped" },
                d.fit.iterations,
                cfg.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
