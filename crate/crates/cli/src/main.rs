mod analyze;
mod error;
mod gen_data;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::{CliError, Result};

/// Differentially private federated learning with tensor low-rank smoothing.
#[derive(Parser)]
#[command(name = "fedceo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics, final models and a manifest.
    Run {
        /// Flat key = value config file.
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        config: Option<PathBuf>,
        /// run_manifest.json of an earlier run to reproduce.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Extra `key=value` assignments applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid over one config key and several seeds.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Config key to vary, e.g. dp.sigma.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Diagnostics for a finished run directory.
    Analyze {
        /// Directory written by `run`.
        #[arg(long)]
        run_dir: PathBuf,
        /// metrics.csv of a noiseless reference run, for the utility gap.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Where to write the reports; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the blob dataset of a config as train.txt and test.txt.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("FEDCEO_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("FEDCEO_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run {
            config,
            manifest,
            overrides,
            out,
        } => run::run(config.as_deref(), manifest.as_deref(), &overrides, &out),
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            overrides,
            out,
        } => sweep::run(config.as_deref(), &overrides, axis, values, seeds, &out),
        Command::Analyze { run_dir, baseline, out } => {
            analyze::run(&run_dir, baseline.as_deref(), out.as_deref().unwrap_or(&run_dir))
        }
        Command::GenData { config, overrides, out } => gen_data::run(config.as_deref(), &overrides, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedceo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
