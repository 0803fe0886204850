use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use fedceo::config::{self, parse_config, parse_config_str, to_config_text};
use fedceo::learner::Model;
use fedceo::protocol::{run_experiment_with, stack_clients, RunConfig, METRICS_HEADER};
use fedceo::tensor::write_t3r_all;
use serde_json::json;

use crate::error::{CliError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MODEL_FILE: &str = "final_model.t3r";
pub const UPLOADS_FILE: &str = "final_uploads.t3r";
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Applies `key=value` assignments, selectors first as in config files,
/// then validates.
pub fn apply_overrides(cfg: &mut RunConfig, overrides: &[String]) -> Result<()> {
    let mut pairs = Vec::with_capacity(overrides.len());
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        pairs.push((k.trim(), v.trim()));
    }
    pairs.sort_by_key(|(k, _)| !matches!(*k, "model" | "data" | "partition"));
    for (k, v) in pairs {
        config::set_key(cfg, k, v)?;
    }
    Ok(config::validate(cfg)?)
}

/// The config file, or the defaults when there is none, plus overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, overrides)?;
    Ok(cfg)
}

pub fn load_manifest(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg_text = value["config"]
        .as_str()
        .ok_or_else(|| CliError::Config(format!("{}: no \"config\" string", path.display())))?;
    Ok(parse_config_str(cfg_text, None)?)
}

pub fn manifest_json(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "tool": "fedceo",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "algorithm": cfg.algorithm.name(),
        "config": to_config_text(cfg),
    })
}

pub fn write_models(path: &Path, models: &[Model]) -> Result<()> {
    let tensors = stack_clients(models)?;
    let f = File::create(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut w = BufWriter::new(f);
    write_t3r_all(&mut w, &tensors).map_err(|e| CliError::io(path.display(), e))?;
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn run(config: Option<&Path>, manifest: Option<&Path>, overrides: &[String], out: &Path) -> Result<()> {
    let cfg = match manifest {
        Some(m) => {
            let mut cfg = load_manifest(m)?;
            apply_overrides(&mut cfg, overrides)?;
            cfg
        }
        None => load_config(config, overrides)?,
    };
    fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest_json(&cfg)).expect("json values serialize");
    fs::write(&manifest_path, text + "\n").map_err(|e| CliError::io(manifest_path.display(), e))?;

    let metrics_path = out.join(METRICS_FILE);
    let f = File::create(&metrics_path).map_err(|e| CliError::io(metrics_path.display(), e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "{METRICS_HEADER}").map_err(|e| CliError::io(metrics_path.display(), e))?;
    w.flush().map_err(|e| CliError::io(metrics_path.display(), e))?;
    let mut write_err = None;
    let result = run_experiment_with(&cfg, |row| {
        if write_err.is_none() {
            if let Err(e) = writeln!(w, "{}", row.csv_line()).and_then(|_| w.flush()) {
                write_err = Some(e);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(CliError::io(metrics_path.display(), e));
    }
    let output = result?;
    write_models(&out.join(MODEL_FILE), std::slice::from_ref(&output.final_model))?;
    write_models(&out.join(UPLOADS_FILE), &output.final_uploads)?;
    let last = output.metrics.last().expect("the final round is always evaluated");
    eprintln!(
        "{}: {} rounds, final acc {:.4}, loss {:.4}, eps_p {}",
        cfg.algorithm.name(),
        cfg.rounds,
        last.acc,
        last.loss,
        last.eps_p
    );
    Ok(())
}
