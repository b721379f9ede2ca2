use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use log::info;
use mdsbl_exp::{emit_plot_data, load_config, run_experiment, write_outputs, Algorithm, Figure};

#[derive(Parser)]
#[command(name = "mdsbl", version, about = "Seeded Monte-Carlo experiments for multi-radar SBL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print its normalized form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment and write rows.csv, aggregate.csv, timing.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "MDSBL_WORKERS")]
        workers: Option<usize>,
        /// Run only this algorithm.
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
    },
    /// Write the synthetic observations without solving.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Runs per variant (default: the config's `runs`).
        #[arg(long)]
        runs: Option<u64>,
    },
    /// Turn an aggregate.csv into a tall plot table.
    Plotdata {
        #[arg(long)]
        aggregate: PathBuf,
        #[arg(long, value_enum)]
        figure: Figure,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AlgorithmArg {
    Sbl,
    Nomp,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            print!("{}", cfg.to_toml_string());
        }
        Command::Run {
            config,
            output,
            seed,
            workers,
            algorithm,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(a) = algorithm {
                let a = match a {
                    AlgorithmArg::Sbl => Algorithm::Sbl,
                    AlgorithmArg::Nomp => Algorithm::Nomp,
                };
                cfg.algorithms.retain(|x| *x == a);
                if cfg.algorithms.is_empty() {
                    bail!("{a} is not among the config's algorithms");
                }
            }
            let Some(dir) = output.or_else(|| cfg.output.as_ref().map(PathBuf::from)) else {
                bail!("no output directory: pass --output or set `output` in the config");
            };
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let out = run_experiment(&cfg, workers)?;
            write_outputs(&out, &cfg, &dir)?;
            let failed: usize = out.aggregate.iter().map(|a| a.failed).sum();
            info!("{} rows written to {} ({failed} failed runs)", out.rows.len(), dir.display());
        }
        Command::Simulate {
            config,
            output,
            seed,
            runs,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let n = mdsbl_exp::simulate::write_observations(&cfg, runs.unwrap_or(cfg.runs), &output)?;
            info!("{n} samples written to {}", output.display());
        }
        Command::Plotdata {
            aggregate,
            figure,
            output,
        } => {
            let n = emit_plot_data(&aggregate, figure, &output)?;
            info!("{n} plot rows written to {}", output.display());
        }
    }
    Ok(())
}
