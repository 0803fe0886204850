use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ProtocolError, Result};
use crate::dp::DpConfig;
use crate::learner::{Architecture, BlobSpec, PartitionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Clipped updates, no noise.
    FedAvg,
    /// Clipped updates with Gaussian noise at every client.
    LdpFedAvg,
    /// LDP-FedAvg plus periodic truncated-tSVD smoothing at the server.
    FedCeo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::LdpFedAvg => "ldp_fedavg",
            Algorithm::FedCeo => "fedceo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fedavg" => Some(Algorithm::FedAvg),
            "ldp_fedavg" => Some(Algorithm::LdpFedAvg),
            "fedceo" => Some(Algorithm::FedCeo),
            _ => None,
        }
    }

    pub fn adds_noise(self) -> bool {
        !matches!(self, Algorithm::FedAvg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    /// Gaussian blobs drawn from the run seed.
    Blobs {
        num_classes: usize,
        dim: usize,
        samples_per_class: usize,
        test_per_class: usize,
        spread: f64,
        /// Dimension of the subspace holding the class centers.
        latent_rank: Option<usize>,
    },
    /// Train and test sets in the ASCII dataset format.
    Files { train: PathBuf, test: PathBuf },
}

impl DataSource {
    pub fn blob_spec(&self, seed: u64) -> Option<BlobSpec> {
        match *self {
            DataSource::Blobs {
                num_classes,
                dim,
                samples_per_class,
                spread,
                latent_rank,
                ..
            } => Some(BlobSpec {
                num_classes,
                dim,
                samples_per_class,
                spread,
                seed,
                latent_rank,
            }),
            DataSource::Files { .. } => None,
        }
    }
}

/// Everything that determines a run. A run's output is a pure function of
/// this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Total clients `N`.
    pub n_total: usize,
    /// Clients sampled per round `K`.
    pub k_selected: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dp: DpConfig,
    /// Initial coefficient `λ` of the proximal objective.
    pub lambda: f64,
    /// Common ratio `ϑ` of the threshold schedule.
    pub ratio: f64,
    /// Smoothing interval `I`.
    pub interval: usize,
    /// Divide the scheduled threshold by `K` before truncation.
    pub threshold_div_k: bool,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub eval_every: usize,
    pub model: Architecture,
    pub data: DataSource,
    pub partition: PartitionMode,
}

impl Default for RunConfig {
    /// Desk-scale defaults: N = 20, K = 5, T = 60, E = 3, B = 32.
    fn default() -> Self {
        Self {
            n_total: 20,
            k_selected: 5,
            rounds: 60,
            local_epochs: 3,
            batch_size: 32,
            lr: 0.1,
            dp: DpConfig {
                k_selected: 5,
                ..DpConfig::default()
            },
            lambda: 5.0,
            ratio: 1.04,
            interval: 5,
            threshold_div_k: false,
            algorithm: Algorithm::FedCeo,
            seed: 0,
            eval_every: 1,
            model: Architecture::Logistic,
            data: DataSource::Blobs {
                num_classes: 10,
                dim: 20,
                samples_per_class: 200,
                test_per_class: 100,
                spread: 0.5,
                latent_rank: None,
            },
            partition: PartitionMode::Iid,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ProtocolError {
    ProtocolError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(invalid("n_total", "must be at least 1"));
        }
        if self.k_selected == 0 || self.k_selected > self.n_total {
            return Err(invalid("k_selected", "must lie in 1..=n_total"));
        }
        if self.dp.k_selected != self.k_selected {
            return Err(invalid("k_selected", "dp.k_selected must equal k_selected"));
        }
        for (field, v) in [
            ("rounds", self.rounds),
            ("local_epochs", self.local_epochs),
            ("batch_size", self.batch_size),
            ("interval", self.interval),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", "must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be positive"));
        }
        if !(self.ratio >= 1.0 && self.ratio.is_finite()) {
            return Err(invalid("ratio", "must be at least 1"));
        }
        self.dp.validate().map_err(|e| match e {
            crate::dp::DpError::InvalidConfig { field, value } => invalid(field, format!("{value} is out of range")),
            crate::dp::DpError::InvalidDelta(d) => invalid("dp.delta", format!("{d} is not in (0, 1)")),
            other => invalid("dp", other.to_string()),
        })?;
        if let Architecture::Mlp { hidden: 0, .. } = self.model {
            return Err(invalid("model.hidden", "must be at least 1"));
        }
        match &self.data {
            DataSource::Blobs {
                num_classes,
                dim,
                samples_per_class,
                test_per_class,
                spread,
                latent_rank,
            } => {
                if *latent_rank == Some(0) {
                    return Err(invalid("data.latent_rank", "must be at least 1"));
                }
                if *num_classes < 2 {
                    return Err(invalid("data.classes", "need at least 2 classes"));
                }
                if *dim == 0 {
                    return Err(invalid("data.dim", "must be at least 1"));
                }
                if *samples_per_class == 0 {
                    return Err(invalid("data.samples_per_class", "must be at least 1"));
                }
                if *test_per_class == 0 {
                    return Err(invalid("data.test_per_class", "must be at least 1"));
                }
                if !(*spread > 0.0 && spread.is_finite()) {
                    return Err(invalid("data.spread", "must be positive"));
                }
                if samples_per_class * num_classes < self.n_total {
                    return Err(invalid("n_total", "more clients than training samples"));
                }
            }
            DataSource::Files { .. } => {}
        }
        match self.partition {
            PartitionMode::Iid => {}
            PartitionMode::LabelShard { shards_per_client } => {
                if shards_per_client == 0 {
                    return Err(invalid("partition.shards", "must be at least 1"));
                }
            }
            PartitionMode::Dirichlet { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid("partition.alpha", "must be positive"));
                }
            }
        }
        Ok(())
    }
}
