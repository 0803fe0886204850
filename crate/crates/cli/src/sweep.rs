use std::fs;
use std::path::Path;

use fedceo::sweep::{sweep, SweepSpec};

use crate::error::{CliError, Result};
use crate::run::load_config;

pub const SWEEP_FILE: &str = "sweep.csv";

pub fn run(
    config: Option<&Path>,
    overrides: &[String],
    axis: String,
    values: Vec<String>,
    seeds: Vec<u64>,
    out: &Path,
) -> Result<()> {
    let spec = SweepSpec {
        base: load_config(config, overrides)?,
        axis,
        values,
        seeds,
    };
    let table = sweep(&spec)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
    let path = out.join(SWEEP_FILE);
    fs::write(&path, table.to_csv()).map_err(|e| CliError::io(path.display(), e))?;
    for s in &table.summary {
        eprintln!(
            "{} = {}: acc {:.4} ± {:.4} over {} runs",
            spec.axis, s.value, s.mean_acc, s.std_acc, s.runs
        );
    }
    if table.failures.is_empty() {
        return Ok(());
    }
    for f in &table.failures {
        eprintln!("{} = {}, seed {}: {}", spec.axis, f.value, f.seed, f.error);
    }
    let first = &table.failures[0].error;
    let msg = format!(
        "{} of {} cells failed",
        table.failures.len(),
        spec.values.len() * spec.seeds.len()
    );
    Err(if table.failures.iter().all(|f| f.error.is_config_error()) {
        CliError::Config(format!("{msg}: {first}"))
    } else {
        CliError::Numeric(format!("{msg}: {first}"))
    })
}
