use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use fedceo::analysis::{
    attack_trial, head_smoothness, mean_attack_error, spectral_curves, utility_gap, SpectralCurves,
};
use fedceo::dp::{DpConfig, Purpose, StreamRng};
use fedceo::learner::{Architecture, Model};
use fedceo::protocol::{unstack_clients, Federation, MetricsRow, RunConfig, METRICS_HEADER};
use fedceo::tensor::{read_t3r_all, Tensor3};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::run::{load_manifest, MANIFEST_FILE, METRICS_FILE, MODEL_FILE, UPLOADS_FILE};

const ATTACK_SIGMAS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
const ATTACK_SEEDS: u64 = 20;
const VICTIMS: usize = 32;

fn parse_field(s: &str, path: &Path, line: usize) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|e| CliError::Config(format!("{}:{line}: {s:?}: {e}", path.display()))),
    }
}

/// Rows of a metrics.csv written by `run`.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(CliError::Config(format!("{}: not a metrics file", path.display())));
    }
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let line = i + 2;
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 5 {
            return Err(CliError::Config(format!(
                "{}:{line}: expected 5 fields",
                path.display()
            )));
        }
        rows.push(MetricsRow {
            round: f[0]
                .parse()
                .map_err(|e| CliError::Config(format!("{}:{line}: {e}", path.display())))?,
            loss: parse_field(f[1], path, line)?,
            acc: parse_field(f[2], path, line)?,
            tnn_total: if f[3].is_empty() {
                None
            } else {
                Some(parse_field(f[3], path, line)?)
            },
            eps_p: parse_field(f[4], path, line)?,
        });
    }
    Ok(rows)
}

fn read_tensors(path: &Path) -> Result<Vec<Tensor3>> {
    let f = File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    read_t3r_all(&mut BufReader::new(f)).map_err(|e| CliError::io(path.display(), e))
}

fn block_names(model: &Model) -> Vec<String> {
    let mut names = Vec::new();
    for (i, l) in model.layers().iter().enumerate() {
        names.push(format!("layer{i}.weight"));
        if l.bias.is_some() {
            names.push(format!("layer{i}.bias"));
        }
    }
    names
}

fn spectra_csv(names: &[String], curves: &[SpectralCurves]) -> String {
    let mut out = String::from("block,slice,index,singular_value\n");
    for (name, c) in names.iter().zip(curves) {
        for (s, vals) in c.slices.iter().enumerate() {
            for (i, v) in vals.iter().enumerate() {
                writeln!(out, "{name},{s},{i},{v:.10e}").expect("writing to a String");
            }
        }
    }
    out
}

fn attack_report(cfg: &RunConfig, model: &Model, fed: &Federation) -> Result<Value> {
    if cfg.model != Architecture::Logistic {
        return Ok(json!({ "skipped": "closed-form inversion needs model = logistic" }));
    }
    let test = &fed.test;
    let n = VICTIMS.min(test.len());
    let victims: Vec<(Vec<f64>, usize)> = (0..n)
        .map(|i| (test.features().row(i).to_vec(), test.labels()[i]))
        .collect();
    let mut noiseless_min = f64::INFINITY;
    for (i, (x, y)) in victims.iter().enumerate() {
        let dp = DpConfig { sigma: 0.0, ..cfg.dp };
        let out = attack_trial(
            model,
            x,
            *y,
            &dp,
            &StreamRng::new(cfg.seed, i as u64, 0, Purpose::Attack),
        )
        .map_err(|e| CliError::Numeric(e.to_string()))?;
        noiseless_min = noiseless_min.min(out.cosine);
    }
    let mut sigmas = ATTACK_SIGMAS.to_vec();
    if !sigmas.contains(&cfg.dp.sigma) {
        sigmas.push(cfg.dp.sigma);
    }
    let mut per_sigma = Vec::new();
    for sigma in sigmas {
        let dp = DpConfig { sigma, ..cfg.dp };
        let mut errs = Vec::with_capacity(ATTACK_SEEDS as usize);
        for s in 0..ATTACK_SEEDS {
            errs.push(
                mean_attack_error(model, &victims, &dp, cfg.seed.wrapping_add(s))
                    .map_err(|e| CliError::Numeric(e.to_string()))?,
            );
        }
        errs.sort_by(f64::total_cmp);
        let mid = errs.len() / 2;
        let median = if errs.len() % 2 == 0 {
            (errs[mid - 1] + errs[mid]) / 2.0
        } else {
            errs[mid]
        };
        per_sigma.push(json!({ "sigma": sigma, "median_error": median, "errors": errs }));
    }
    Ok(json!({
        "victims": n,
        "seeds": ATTACK_SEEDS,
        "clip_c": cfg.dp.clip_c,
        "k_selected": cfg.dp.k_selected,
        "noiseless_min_cosine": noiseless_min,
        "by_sigma": per_sigma,
    }))
}

pub fn run(run_dir: &Path, baseline: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_manifest(&run_dir.join(MANIFEST_FILE))?;
    let metrics = read_metrics(&run_dir.join(METRICS_FILE))?;
    let last = *metrics
        .last()
        .ok_or_else(|| CliError::Config(format!("{}: no rows", run_dir.join(METRICS_FILE).display())))?;
    let fed = Federation::from_config(&cfg)?;
    let template = Model::init(
        cfg.model,
        fed.train.dim(),
        fed.train.num_classes(),
        &StreamRng::root(cfg.seed, Purpose::ModelInit),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let model = unstack_clients(&read_tensors(&run_dir.join(MODEL_FILE))?, &template)?
        .pop()
        .ok_or_else(|| CliError::Config("final model file is empty".into()))?;
    let upload_tensors = read_tensors(&run_dir.join(UPLOADS_FILE))?;
    let uploads = unstack_clients(&upload_tensors, &template)?;

    fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
    let heat = head_smoothness(&uploads).map_err(|e| CliError::Numeric(e.to_string()))?;
    let p = out.join("heatmap.csv");
    fs::write(&p, heat.to_csv()).map_err(|e| CliError::io(p.display(), e))?;

    let curves = upload_tensors
        .iter()
        .map(spectral_curves)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let p = out.join("spectra.csv");
    fs::write(&p, spectra_csv(&block_names(&template), &curves)).map_err(|e| CliError::io(p.display(), e))?;

    let gap = match baseline {
        Some(b) => {
            let base = read_metrics(b)?;
            let base_last = base
                .last()
                .ok_or_else(|| CliError::Config(format!("{}: no rows", b.display())))?;
            Some(utility_gap(last.loss, base_last.loss))
        }
        None => None,
    };
    let concentration: Vec<Value> = block_names(&template)
        .iter()
        .zip(&curves)
        .map(|(n, c)| json!({ "block": n, "ratio": finite_or_null(c.concentration()) }))
        .collect();
    let report = json!({
        "algorithm": cfg.algorithm.name(),
        "seed": cfg.seed,
        "final": {
            "round": last.round,
            "loss": last.loss,
            "acc": last.acc,
            "eps_p": finite_or_null(last.eps_p),
        },
        "utility_gap": gap,
        "smoothness_total": heat.total(),
        "spectral_concentration": concentration,
        "attack": attack_report(&cfg, &model, &fed)?,
    });
    let p = out.join("attack_report.json");
    let text = serde_json::to_string_pretty(&report).expect("json values serialize");
    fs::write(&p, text + "\n").map_err(|e| CliError::io(p.display(), e))?;
    eprintln!(
        "wrote heatmap.csv, spectra.csv and attack_report.json to {}",
        out.display()
    );
    Ok(())
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}
