//! Grids of runs over one config key and a list of seeds.
//!
//! Cells run in parallel; results are reported in (value index, seed index)
//! order no matter how the work was scheduled.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, ConfigError};
use crate::protocol::{run_experiment, ProtocolError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    /// Any config key, e.g. `dp.sigma`.
    pub axis: String,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    pub seed: u64,
    pub acc: f64,
    pub loss: f64,
    pub eps_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub value: String,
    pub runs: usize,
    pub mean_acc: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_acc: f64,
    pub mean_loss: f64,
    pub eps_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub value: String,
    pub seed: u64,
    pub error: ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    pub summary: Vec<SweepSummary>,
    pub failures: Vec<SweepFailure>,
}

pub const SWEEP_HEADER: &str = "kind,value,seed,acc,acc_std,loss,eps_p";

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.10}")
    }
}

impl SweepTable {
    /// Cell rows, then one `mean` row per value with at least one success.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for c in &self.cells {
            writeln!(
                out,
                "cell,{},{},{},,{},{}",
                c.value,
                c.seed,
                fmt(c.acc),
                fmt(c.loss),
                fmt(c.eps_p)
            )
            .expect("writing to a String");
        }
        for s in &self.summary {
            writeln!(
                out,
                "mean,{},,{},{},{},{}",
                s.value,
                fmt(s.mean_acc),
                fmt(s.std_acc),
                fmt(s.mean_loss),
                fmt(s.eps_p)
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn mean_acc(&self, value: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.value == value).map(|s| s.mean_acc)
    }
}

impl SweepSpec {
    /// Config of one cell, validated.
    pub fn cell_config(&self, value: &str, seed: u64) -> Result<RunConfig, ConfigError> {
        let mut cfg = self.base.clone();
        config::set_key(&mut cfg, &self.axis, value)?;
        cfg.seed = seed;
        config::validate(&cfg)?;
        Ok(cfg)
    }

    /// Checks the axis and every value before anything runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |reason: &str| ConfigError::Validation {
            field: "sweep".into(),
            reason: reason.into(),
        };
        if self.values.is_empty() {
            return Err(invalid("no values"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("no seeds"));
        }
        if self.axis == "seed" {
            return Err(invalid("sweep seeds through the seed list, not the axis"));
        }
        for v in &self.values {
            self.cell_config(v, self.seeds[0])?;
        }
        Ok(())
    }
}

fn summarize(value: &str, cells: &[&SweepCell]) -> Option<SweepSummary> {
    if cells.is_empty() {
        return None;
    }
    let n = cells.len() as f64;
    let mean_acc = cells.iter().map(|c| c.acc).sum::<f64>() / n;
    let var = if cells.len() > 1 {
        cells.iter().map(|c| (c.acc - mean_acc).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(SweepSummary {
        value: value.to_string(),
        runs: cells.len(),
        mean_acc,
        std_acc: var.sqrt(),
        mean_loss: cells.iter().map(|c| c.loss).sum::<f64>() / n,
        eps_p: cells[0].eps_p,
    })
}

/// Runs every (value, seed) cell. A failing cell is recorded in
/// `failures` and the remaining cells still run.
pub fn sweep(spec: &SweepSpec) -> Result<SweepTable, ConfigError> {
    spec.validate()?;
    let jobs: Vec<(&String, u64)> = spec
        .values
        .iter()
        .flat_map(|v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<std::result::Result<SweepCell, SweepFailure>> = jobs
        .par_iter()
        .map(|&(value, seed)| {
            let cfg = spec.cell_config(value, seed).expect("validated above");
            let fail = |error| SweepFailure {
                value: value.clone(),
                seed,
                error,
            };
            let out = run_experiment(&cfg).map_err(fail)?;
            let last = *out.metrics.last().expect("the final round is always evaluated");
            Ok(SweepCell {
                value: value.clone(),
                seed,
                acc: last.acc,
                loss: last.loss,
                eps_p: last.eps_p,
            })
        })
        .collect();
    let mut table = SweepTable::default();
    for r in results {
        match r {
            Ok(c) => table.cells.push(c),
            Err(f) => table.failures.push(f),
        }
    }
    for v in &spec.values {
        let mine: Vec<&SweepCell> = table.cells.iter().filter(|c| &c.value == v).collect();
        table.summary.extend(summarize(v, &mine));
    }
    Ok(table)
}
