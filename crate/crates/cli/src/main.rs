use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kedge_cli::{commands, exit, CliResult, ExperimentConfig};

/// Low-dimensional models of X-ray attenuation spectra.
#[derive(Parser)]
#[command(name = "kedge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the element tables and summarize them.
    Ingest(Common),
    /// Generate datasets and their train/val/test splits.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Only these datasets (repeatable).
        #[arg(long = "dataset")]
        datasets: Vec<String>,
    },
    /// Fit models.
    Train {
        #[command(flatten)]
        common: Common,
        /// Only these models (repeatable).
        #[arg(long = "model")]
        models: Vec<String>,
    },
    /// Score models and write the report.
    Evaluate(Common),
    /// Re-render the report and export per-spectrum codes.
    Report(Common),
}

fn load(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(c) => {
            let p = commands::ingest(&load(&c)?)?;
            println!("{}", p.display());
        }
        Command::Synthesize { common, datasets } => {
            for p in commands::synthesize(&load(&common)?, &datasets)? {
                println!("{}", p.display());
            }
        }
        Command::Train { common, models } => {
            for p in commands::train(&load(&common)?, &models)? {
                println!("{}", p.display());
            }
        }
        Command::Evaluate(c) => {
            for r in commands::evaluate(&load(&c)?)? {
                println!(
                    "{}\t{}\tmean={:.6e}\tmedian={:.6e}\tn={}",
                    r.model_name,
                    r.dataset_name,
                    r.summary.mean,
                    r.summary.median,
                    r.nmse.len()
                );
            }
        }
        Command::Report(c) => {
            for p in commands::report(&load(&c)?)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(exit::USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
