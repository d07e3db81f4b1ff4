use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use mstl_cli::{cmd_eval, cmd_preprocess, cmd_simulate, cmd_sweep, cmd_train, parse_factors, Algorithm, RunConfig};

#[derive(Parser)]
#[command(name = "mstl", version, about = "Magnetic indoor localization with multi-scale TCN + LSTM models")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundled preset S, M or L, used when --config is absent.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate trace CSVs from a world and a list of walks.
    Simulate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        walks: PathBuf,
    },
    /// Split traces, fit normalization and report window counts.
    Preprocess {
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Train the configured model.
    Train {
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Evaluate one algorithm on the test traces.
    Eval {
        /// MSTL, LSTM, TCN, MSTT or DTW.
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Evaluate one algorithm across walking-speed factors.
    Sweep {
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated factors, e.g. `1/2,1,2,4`; defaults to the config list.
        #[arg(long)]
        factors: Option<String>,
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

fn run_config(cli: &Cli, traces: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(p)) => RunConfig::preset(p)?,
        (None, None) => bail!("pass --config <path> or --preset S|M|L"),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(t) = traces {
        cfg.data.traces = Some(t.to_path_buf());
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate { world, walks } => {
            for p in cmd_simulate(world, walks, &cli.out)? {
                println!("{}", p.display());
            }
        }
        Command::Preprocess { traces } => {
            let cfg = run_config(&cli, traces.as_deref())?;
            let s = cmd_preprocess(&cfg, &cli.out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Train { traces } => {
            let cfg = run_config(&cli, traces.as_deref())?;
            let o = cmd_train(&cfg, &cli.out)?;
            println!("{}", o.checkpoint.display());
            println!("{}", o.history_path.display());
        }
        Command::Eval { algorithm, checkpoint, traces } => {
            let cfg = run_config(&cli, traces.as_deref())?;
            let o = cmd_eval(&cfg, checkpoint.as_deref(), *algorithm, &cli.out)?;
            println!("{}", o.report_path.display());
            println!("{}", o.trajectory_path.display());
        }
        Command::Sweep { algorithm, checkpoint, factors, traces } => {
            let cfg = run_config(&cli, traces.as_deref())?;
            let factors = match factors {
                Some(list) => parse_factors(list)?,
                None => cfg.eval.factors.clone(),
            };
            let (_, path) = cmd_sweep(&cfg, checkpoint.as_deref(), *algorithm, &factors, &cli.out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
