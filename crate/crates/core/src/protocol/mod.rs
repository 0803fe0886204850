//! Federated training loops: LDP-FedAvg and FedCEO.
//!
//! Every round samples K of N clients, runs their local updates in parallel
//! and reduces the uploads in ascending client order on a single thread.
//! FedCEO additionally folds the uploads into per-layer tensors every `I`
//! rounds and replaces them with their truncated tensor SVD.

mod config;
mod experiment;
mod schedule;
mod server;
mod smoothing;

pub use config::{Algorithm, DataSource, RunConfig};
pub use experiment::{run_experiment, run_experiment_with, ExperimentOutput, MetricsRow, MetricsTable, METRICS_HEADER};
pub use schedule::{select_clients, threshold_schedule};
pub use server::{client_update, run_round, run_round_fedavg, run_round_fedceo, Federation, ServerState};
pub use smoothing::{average_models, server_smooth, stack_clients, unstack_clients};

use thiserror::Error;

use crate::dp::DpError;
use crate::learner::LearnerError;
use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid config field {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("round {round} is not a smoothing round for interval {interval}")]
    NotSmoothingRound { round: usize, interval: usize },
    #[error("client models do not share one architecture")]
    ArchMismatch,
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

impl ProtocolError {
    /// True for failures caused by the configuration rather than by numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(self, ProtocolError::InvalidConfig { .. } | ProtocolError::Io(_))
            || matches!(
                self,
                ProtocolError::Dp(
                    DpError::InvalidConfig { .. } | DpError::InvalidDelta(_) | DpError::PopulationTooSmall { .. }
                )
            )
            || matches!(
                self,
                ProtocolError::Learner(
                    LearnerError::Parse { .. } | LearnerError::TooManyClients { .. } | LearnerError::InvalidArgument(_)
                )
            )
    }
}

pub type Result<T> = std::result::Result<T, ProtocolError>;
