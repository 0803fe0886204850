//! Client sampling and the smoothing-threshold schedule.

use rand::seq::index;

use super::{ProtocolError, Result};
use crate::dp::{Purpose, StreamRng};

/// Uniform `k`-subset of `0..n_total` for `round`, in ascending order.
pub fn select_clients(n_total: usize, k: usize, round: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n_total {
        return Err(ProtocolError::InvalidConfig {
            field: "k_selected",
            reason: format!("cannot pick {k} of {n_total} clients"),
        });
    }
    let mut g = StreamRng::new(seed, round as u64, 0, Purpose::ClientSampling).generator();
    let mut picked = index::sample(&mut g, n_total, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Truncation threshold `(1/(2λ))·ϑ^{t/I}`, defined only on smoothing rounds
/// (`t ≡ 0 mod I`), where `t/I` is an integer.
pub fn threshold_schedule(lambda: f64, ratio: f64, t: usize, interval: usize) -> Result<f64> {
    if interval == 0 || !t.is_multiple_of(interval) {
        return Err(ProtocolError::NotSmoothingRound { round: t, interval });
    }
    let exponent = i32::try_from(t / interval).map_err(|_| ProtocolError::InvalidConfig {
        field: "rounds",
        reason: "schedule exponent overflows".into(),
    })?;
    Ok(ratio.powi(exponent) / (2.0 * lambda))
}
