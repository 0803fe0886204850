//! Diagnostics over trained runs: utility gap, client smoothness of the
//! classifier head, Fourier-slice spectra of stacked layers, and gradient
//! inversion against a softmax-linear head.

mod attack;

pub use attack::{
    attack_trial, cosine_similarity, invert_linear_gradient, mean_attack_error, single_sample_gradient, AttackOutcome,
};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::Model;
use crate::tensor::{Tensor3, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every bias-gradient entry is below {0:e}; the sample cannot be recovered")]
    DegenerateGradient(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Learner(#[from] crate::learner::LearnerError),
    #[error(transparent)]
    Dp(#[from] crate::dp::DpError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// `ε_u = f(w′) − f(w*)`. Reported as-is, negative values included.
pub fn utility_gap(loss_dp_run: f64, loss_clean_run: f64) -> f64 {
    loss_dp_run - loss_clean_run
}

/// Per-class, per-client disagreement of the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessMap {
    /// `num_classes × K`; lower is smoother.
    pub values: Array2<f64>,
}

impl SmoothnessMap {
    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    pub fn to_csv(&self) -> String {
        let k = self.values.ncols();
        let mut out = String::from("class");
        for c in 0..k {
            out.push_str(&format!(",client_{c}"));
        }
        out.push('\n');
        for (j, row) in self.values.rows().into_iter().enumerate() {
            out.push_str(&j.to_string());
            for v in row {
                out.push_str(&format!(",{v:.10e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Cell `(j, k)` is `(1/(K−1))·Σ_{l≠k} ‖row_j(W_k) − row_j(W_l)‖²`, the
/// complete-graph Laplacian form on class row `j` attributed to client `k`.
/// Each matrix holds one row per class.
pub fn smoothness_map(last_layer_weights: &[ArrayView2<'_, f64>]) -> Result<SmoothnessMap> {
    let first = last_layer_weights
        .first()
        .ok_or_else(|| AnalysisError::ShapeMismatch("no client matrices".into()))?;
    let shape = first.dim();
    if let Some(m) = last_layer_weights.iter().find(|m| m.dim() != shape) {
        return Err(AnalysisError::ShapeMismatch(format!("{:?} vs {:?}", m.dim(), shape)));
    }
    let k = last_layer_weights.len();
    let classes = shape.0;
    let mut values = Array2::zeros((classes, k));
    if k == 1 {
        return Ok(SmoothnessMap { values });
    }
    for j in 0..classes {
        for a in 0..k {
            let mut acc = 0.0;
            for b in 0..k {
                if a != b {
                    let ra = last_layer_weights[a].row(j);
                    let rb = last_layer_weights[b].row(j);
                    acc += ra.iter().zip(rb.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                }
            }
            values[[j, a]] = acc / (k - 1) as f64;
        }
    }
    Ok(SmoothnessMap { values })
}

/// The last layer's weight as a `classes × in` matrix.
pub fn class_rows(model: &Model) -> Array2<f64> {
    model
        .layers()
        .last()
        .expect("models have at least one layer")
        .weight
        .t()
        .to_owned()
}

/// Smoothness map of the classifier heads of `models`.
pub fn head_smoothness(models: &[Model]) -> Result<SmoothnessMap> {
    let rows: Vec<Array2<f64>> = models.iter().map(class_rows).collect();
    let views: Vec<ArrayView2<'_, f64>> = rows.iter().map(|r| r.view()).collect();
    smoothness_map(&views)
}

/// Sorted singular values of every Fourier slice of a stacked tensor;
/// `slices[0]` is the zero-frequency slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurves {
    pub slices: Vec<Vec<f64>>,
}

impl SpectralCurves {
    pub fn top(&self, slice: usize) -> f64 {
        self.slices[slice].first().copied().unwrap_or(0.0)
    }

    /// Top singular value of slice 0 over the largest top value elsewhere;
    /// infinite when every other slice vanishes.
    pub fn concentration(&self) -> f64 {
        let rest = (1..self.slices.len()).map(|k| self.top(k)).fold(0.0, f64::max);
        if rest == 0.0 {
            f64::INFINITY
        } else {
            self.top(0) / rest
        }
    }
}

pub fn spectral_curves(t: &Tensor3) -> Result<SpectralCurves> {
    Ok(SpectralCurves {
        slices: crate::tensor::all_fourier_singular_values(t)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{standard_normals, Purpose, StreamRng};
    use crate::learner::Architecture;
    use crate::protocol::{server_smooth, stack_clients};
    use crate::tensor::{svd_complex, Tensor3};
    use ndarray::Array2;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn gauss(rows: usize, cols: usize, seed: u64, client: u64) -> Array2<f64> {
        let mut g = StreamRng::new(seed, 0, client, Purpose::Attack).generator();
        Array2::from_shape_vec((rows, cols), standard_normals(&mut g, rows * cols)).unwrap()
    }

    #[test]
    fn utility_gap_of_identical_runs_is_zero() {
        assert_eq!(utility_gap(0.731, 0.731), 0.0);
        assert_eq!(utility_gap(0.5, 0.7), 0.5 - 0.7);
    }

    #[test]
    fn identical_heads_are_perfectly_smooth() {
        let w = gauss(10, 6, 1, 0);
        let map = smoothness_map(&[w.view(), w.view(), w.view()]).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
        assert_eq!(map.values.dim(), (10, 3));
    }

    #[test]
    fn perturbation_stays_local() {
        let k = 5usize;
        let base: Vec<Array2<f64>> = (0..k as u64).map(|c| gauss(12, 4, 2, c)).collect();
        let mut bumped = base.clone();
        bumped[3][[10, 1]] += 50.0;
        fn views(v: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
            v.iter().map(|m| m.view()).collect()
        }
        let before = smoothness_map(&views(&base)).unwrap();
        let after = smoothness_map(&views(&bumped)).unwrap();
        for j in 0..12 {
            if j != 10 {
                assert_eq!(before.values.row(j), after.values.row(j));
            }
        }
        let row = after.values.row(10);
        let best = (0..k).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(best, 3);
        let global = after.values.iter().cloned().fold(0.0, f64::max);
        assert_eq!(global, after.values[[10, 3]]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = gauss(3, 2, 3, 0);
        let b = gauss(2, 3, 3, 1);
        assert!(matches!(
            smoothness_map(&[a.view(), b.view()]),
            Err(AnalysisError::ShapeMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn smoothness_is_rotation_invariant(seed in 0u64..500, angle in 0.0f64..6.3) {
            let ms: Vec<Array2<f64>> = (0..4).map(|c| gauss(5, 3, seed, c)).collect();
            // Rotation in the (0, 2) plane of the 3-dimensional row space.
            let mut q = Array2::<f64>::eye(3);
            q[[0, 0]] = angle.cos();
            q[[0, 2]] = -angle.sin();
            q[[2, 0]] = angle.sin();
            q[[2, 2]] = angle.cos();
            let rotated: Vec<Array2<f64>> = ms.iter().map(|m| m.dot(&q)).collect();
            let a = smoothness_map(&ms.iter().map(|m| m.view()).collect::<Vec<_>>()).unwrap();
            let b = smoothness_map(&rotated.iter().map(|m| m.view()).collect::<Vec<_>>()).unwrap();
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn smoothing_lowers_head_disagreement() {
        for seed in 0..5 {
            let center = Model::init(Architecture::Logistic, 8, 6, &StreamRng::root(seed, Purpose::ModelInit)).unwrap();
            let models: Vec<Model> = (0..5u64)
                .map(|c| {
                    let mut g = StreamRng::new(seed, 1, c, Purpose::Noise).generator();
                    let p: Vec<f64> = center
                        .flatten()
                        .iter()
                        .zip(standard_normals(&mut g, center.num_params()))
                        .map(|(w, z)| w + 0.5 * z)
                        .collect();
                    center.unflatten(&p).unwrap()
                })
                .collect();
            let before = head_smoothness(&models).unwrap().total();
            let after = head_smoothness(&server_smooth(&models, 0.8).unwrap()).unwrap().total();
            assert!(after < before, "seed {seed}: {after} vs {before}");
        }
    }

    #[test]
    fn identical_slices_leave_only_the_zero_frequency() {
        let w = gauss(4, 3, 4, 0);
        let t = Tensor3::from_slices(&vec![w.clone(); 6]).unwrap();
        let c = spectral_curves(&t).unwrap();
        assert_eq!(c.slices.len(), 6);
        for s in &c.slices[1..] {
            assert!(s.iter().all(|&v| v.abs() <= 1e-12));
        }
        assert!(c.concentration() > 1e6);
    }

    #[test]
    fn zero_tensor_has_flat_curves() {
        let c = spectral_curves(&Tensor3::zeros(3, 5, 4).unwrap()).unwrap();
        assert!(c.slices.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn first_slice_is_k_times_the_mean() {
        let k = 5;
        let ms: Vec<Array2<f64>> = (0..k).map(|c| gauss(6, 4, 5, c)).collect();
        let t = Tensor3::from_slices(&ms).unwrap();
        let c = spectral_curves(&t).unwrap();
        let sum = ms.iter().fold(Array2::<f64>::zeros((6, 4)), |a, m| a + m);
        let want = svd_complex(sum.mapv(|v| Complex64::new(v, 0.0)).view()).unwrap().sigma;
        for (a, b) in c.slices[0].iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9);
        }
        for s in &c.slices {
            assert!(s.windows(2).all(|w| w[0] >= w[1]) && s.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn stacked_models_feed_spectra() {
        let models: Vec<Model> = (0..3u64)
            .map(|c| {
                Model::init(
                    Architecture::Logistic,
                    4,
                    3,
                    &StreamRng::new(6, 0, c, Purpose::ModelInit),
                )
                .unwrap()
            })
            .collect();
        let st = stack_clients(&models).unwrap();
        let c = spectral_curves(&st[0]).unwrap();
        assert_eq!(c.slices.len(), 3);
        assert_eq!(c.slices[0].len(), 3);
    }
}
