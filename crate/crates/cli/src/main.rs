use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inch::{Config, RateRegistry, Result};
use inch_cli::{cmd_benchmark, cmd_fit, cmd_simulate, exit_code};

#[derive(Parser)]
#[command(name = "inch", version, about = "Switching movement models with integrated switch-time MCMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a track from the configured model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output track CSV.
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent path (states and switch events).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Overrides `simulate.n_obs`.
        #[arg(long)]
        n_obs: Option<usize>,
    },
    /// Fit the configured sampler to one track.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for samples.csv and efficiency.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare samplers by ESS per second on one or more tracks.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Repeat for several tracks.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let registry = RateRegistry::default();
    match cli.command {
        Command::Simulate { config, seed, out, trajectory, n_obs } => {
            let mut cfg = Config::load(&config)?;
            if let Some(n) = n_obs {
                cfg.simulate.n_obs = n;
            }
            let track = cmd_simulate(&cfg, &registry, seed.unwrap_or(cfg.run.seed), &out, trajectory.as_deref())?;
            eprintln!("wrote {} observations to {}", track.len(), out.display());
        }
        Command::Fit { config, data, seed, out } => {
            let cfg = Config::load(&config)?;
            let summary = cmd_fit(&cfg, &registry, &data, seed.unwrap_or(cfg.run.seed), &out)?;
            println!("{}", summary.report);
        }
        Command::Benchmark { config, data, seed, out } => {
            let cfg = Config::load(&config)?;
            let report = cmd_benchmark(&cfg, &registry, &data, seed.unwrap_or(cfg.run.seed), &out)?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
