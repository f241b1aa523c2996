use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use coopsync::output::write_outputs;
use coopsync::selftest::run_selftest;
use coopsync::{run_experiment, ExperimentConfig, Scenario};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    version,
    about = "Cooperative multi-satellite carrier synchronization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the built-in oracle checks and print their margins.
    Selftest,
    /// Run a built-in figure preset.
    Sweep {
        #[arg(long, value_enum)]
        scenario: Scenario,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the trial count of the preset.
        #[arg(long)]
        trials: Option<usize>,
        /// Print the preset as TOML and exit.
        #[arg(long)]
        dump_config: bool,
    },
}

fn execute(
    mut cfg: ExperimentConfig,
    out: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<()> {
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if threads == Some(0) {
        bail!("--threads must be ≥ 1");
    }
    let result = run_experiment(&cfg, threads)?;
    let (csv, manifest) = write_outputs(out, &cfg, &result)?;
    eprintln!(
        "{} points, {} trials each, {:.1} s on {} threads",
        result.points.len(),
        cfg.trials,
        result.wall_seconds,
        result.threads
    );
    println!("{}\n{}", csv.display(), manifest.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => execute(ExperimentConfig::load(&config)?, &out, seed, threads),
        Command::Selftest => {
            let report = run_selftest();
            print!("{report}");
            if !report.passed() {
                bail!("self-test failed");
            }
            Ok(())
        }
        Command::Sweep {
            scenario,
            out,
            seed,
            threads,
            trials,
            dump_config,
        } => {
            let mut cfg = scenario.config();
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            if dump_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            execute(cfg, &out, seed, threads)
        }
    }
}
