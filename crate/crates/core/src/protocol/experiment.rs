//! Whole runs and their metrics table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run_round, Federation, Result, RunConfig, ServerState};
use crate::dp::privacy_budget;
use crate::learner::{evaluate, Model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    /// Global-model cross-entropy on the pooled training set.
    pub loss: f64,
    /// Global-model accuracy on the test set.
    pub acc: f64,
    /// Post-smoothing TNN summed over layers; smoothing rounds only.
    pub tnn_total: Option<f64>,
    /// Privacy budget spent after `round` rounds; infinite without noise.
    pub eps_p: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

pub const METRICS_HEADER: &str = "round,loss,acc,tnn_total,eps_p";

fn fmt_float(v: f64) -> String {
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

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.round,
            fmt_float(self.loss),
            fmt_float(self.acc),
            self.tnn_total.map(fmt_float).unwrap_or_default(),
            fmt_float(self.eps_p)
        )
    }
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(out, "{}", r.csv_line()).expect("writing to a String");
        }
        out
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub metrics: MetricsTable,
    pub final_model: Model,
    /// Client uploads of round T, in ascending client order.
    pub final_uploads: Vec<Model>,
    pub final_selected: Vec<usize>,
}

pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    run_experiment_with(cfg, |_| {})
}

/// Runs `cfg` to completion, handing each metrics row to `on_row` as soon as
/// it exists. Rows emitted before a failure have already reached `on_row`
/// when the error is returned.
pub fn run_experiment_with(cfg: &RunConfig, mut on_row: impl FnMut(&MetricsRow)) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let fed = Federation::from_config(cfg)?;
    let mut state = ServerState::new(cfg, fed.train.dim(), fed.train.num_classes())?;
    for t in 1..=cfg.rounds {
        run_round(&mut state, &fed, cfg)?;
        if t % cfg.eval_every == 0 || t == cfg.rounds {
            let (loss, _) = evaluate(&state.global, &fed.train)?;
            let (_, acc) = evaluate(&state.global, &fed.test)?;
            let eps_p = if cfg.algorithm.adds_noise() {
                privacy_budget(&cfg.dp, cfg.n_total, t)?.epsilon
            } else {
                f64::INFINITY
            };
            let row = MetricsRow {
                round: t,
                loss,
                acc,
                tnn_total: state.last_tnn,
                eps_p,
            };
            on_row(&row);
            state.history.push(row);
        }
    }
    Ok(ExperimentOutput {
        metrics: MetricsTable { rows: state.history },
        final_model: state.global,
        final_uploads: state.last_uploads,
        final_selected: state.last_selected,
    })
}
