//! Closed-form gradient inversion for a softmax-linear head.
//!
//! For one sample, `∂L/∂W = x (p − y)ᵀ` (in × out) and `∂L/∂b = p − y`, so
//! column `j` of the weight gradient divided by `(∂L/∂b)_j` returns `x`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};
use crate::dp::{clip_update, standard_normals, DpConfig, Purpose, StreamRng};
use crate::learner::{backward, forward_loss, LearnerError, Model};

const MIN_BIAS_GRAD: f64 = 1e-9;

/// Recovers the input of a single-sample gradient, dividing by the bias
/// entry of largest magnitude.
pub fn invert_linear_gradient(grad_w: ArrayView2<'_, f64>, grad_b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if grad_w.ncols() != grad_b.len() {
        return Err(AnalysisError::ShapeMismatch(format!(
            "weight gradient has {} outputs, bias gradient {}",
            grad_w.ncols(),
            grad_b.len()
        )));
    }
    let (j, &bj) = grad_b
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .ok_or_else(|| AnalysisError::ShapeMismatch("empty bias gradient".into()))?;
    if bj.is_nan() || bj.abs() <= MIN_BIAS_GRAD {
        return Err(AnalysisError::DegenerateGradient(MIN_BIAS_GRAD));
    }
    Ok(grad_w.column(j).mapv(|v| v / bj))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Weight and bias gradient of a one-layer model with bias on one sample.
pub fn single_sample_gradient(model: &Model, x: &[f64], y: usize) -> Result<(Array2<f64>, Array1<f64>)> {
    let layer = match model.layers() {
        [l] if l.bias.is_some() => l,
        _ => {
            return Err(AnalysisError::Learner(LearnerError::InvalidArgument(
                "inversion needs a single linear layer with bias".into(),
            )))
        }
    };
    let features =
        Array2::from_shape_vec((1, x.len()), x.to_vec()).map_err(|e| AnalysisError::ShapeMismatch(e.to_string()))?;
    let (_, cache) = forward_loss(model, features.view(), &[y])?;
    let g = backward(model, &cache)?;
    let (rows, cols) = layer.weight.dim();
    let gw = Array2::from_shape_vec((rows, cols), g[..rows * cols].to_vec()).expect("layout of flatten");
    let gb = Array1::from(g[rows * cols..].to_vec());
    Ok((gw, gb))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub cosine: f64,
    /// `1 − cosine`.
    pub error: f64,
}

/// Inverts what a client would upload for one sample: the clipped gradient
/// plus `N(0, σ²C²/K)` noise from `rng` (no noise when `σ = 0`).
pub fn attack_trial(model: &Model, x: &[f64], y: usize, dp: &DpConfig, rng: &StreamRng) -> Result<AttackOutcome> {
    let (gw, gb) = single_sample_gradient(model, x, y)?;
    let mut flat: Vec<f64> = gw.iter().chain(gb.iter()).copied().collect();
    flat = clip_update(&flat, dp.clip_c)?;
    if dp.sigma > 0.0 {
        let std = dp.noise_std();
        let z = standard_normals(&mut rng.generator(), flat.len());
        for (v, z) in flat.iter_mut().zip(z) {
            *v += std * z;
        }
    }
    let (rows, cols) = gw.dim();
    let nw = Array2::from_shape_vec((rows, cols), flat[..rows * cols].to_vec()).expect("sizes match");
    let nb = Array1::from(flat[rows * cols..].to_vec());
    let cosine = match invert_linear_gradient(nw.view(), nb.view()) {
        Ok(rec) => cosine_similarity(rec.as_slice().expect("contiguous"), x),
        Err(AnalysisError::DegenerateGradient(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(AttackOutcome {
        cosine,
        error: 1.0 - cosine,
    })
}

/// Mean of `1 − cosine` over `victims`, each attacked on its own noise
/// stream `(seed, victim index)`. Streams do not depend on σ, so sweeps over
/// σ use common random numbers.
pub fn mean_attack_error(model: &Model, victims: &[(Vec<f64>, usize)], dp: &DpConfig, seed: u64) -> Result<f64> {
    if victims.is_empty() {
        return Err(AnalysisError::ShapeMismatch("no victims to attack".into()));
    }
    let mut total = 0.0;
    for (i, (x, y)) in victims.iter().enumerate() {
        let rng = StreamRng::new(seed, i as u64, 0, Purpose::Attack);
        total += attack_trial(model, x, *y, dp, &rng)?.error;
    }
    Ok(total / victims.len() as f64)
}
