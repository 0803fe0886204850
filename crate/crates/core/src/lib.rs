//! Federated learning with user-level local differential privacy and
//! server-side tensor low-rank smoothing of client uploads.
//!
//! `tensor` holds the t-product algebra, `dp` the clipping, noise and budget,
//! `learner` the models and data, `protocol` the training loop and
//! `analysis` the diagnostics. `config` and `sweep` back the command line.

pub mod analysis;
pub mod config;
pub mod dp;
pub mod learner;
pub mod protocol;
pub mod sweep;
pub mod tensor;
