//! Tensor SVD, truncated tensor SVD and the tensor nuclear norm.
//!
//! Everything works slice-wise on the mode-3 spectrum. Because the input is
//! real, Fourier slice `k` and slice `n3 − k` are complex conjugates; only
//! the first `⌊n3/2⌋ + 1` slices are decomposed and the rest are mirrored,
//! which also makes the inverse transform real by construction.

use num_complex::Complex64;
use rayon::prelude::*;

use super::dft::{dft_mode3, idft_mode3};
use super::product::t_product;
use super::svd::{singular_values, svd_complex, truncated_svd_matrix, CMatrix, RANK_FLOOR};
use super::{CTensor3, Result, Tensor3, TensorError};

/// `W = U * S * Vᴴ` with `S` f-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TsvdFactors {
    pub u: Tensor3,
    pub s: Tensor3,
    pub v: Tensor3,
}

impl TsvdFactors {
    pub fn reconstruct(&self) -> Result<Tensor3> {
        t_product(&self.u, &t_product(&self.s, &self.v.conj_transpose())?)
    }
}

fn independent_slices(n3: usize) -> usize {
    n3 / 2 + 1
}

/// Multiplicity of Fourier slice `k` among all `n3` slices once mirrors are
/// counted: 1 for the DC slice and the Nyquist slice (even `n3`), else 2.
fn mirror_weight(k: usize, n3: usize) -> f64 {
    if k == 0 || 2 * k == n3 {
        1.0
    } else {
        2.0
    }
}

fn mirror_into_full(mut head: Vec<CMatrix>, n3: usize) -> Vec<CMatrix> {
    for k in head.len()..n3 {
        let m = head[n3 - k].mapv(|z: Complex64| z.conj());
        head.push(m);
    }
    head
}

pub fn tsvd(t: &Tensor3) -> Result<TsvdFactors> {
    let (n1, n2, n3) = t.dims();
    let spec = dft_mode3(t);
    let factors = (0..independent_slices(n3))
        .into_par_iter()
        .map(|k| svd_complex(spec.slice(k)))
        .collect::<Result<Vec<_>>>()?;
    let mut us = Vec::with_capacity(factors.len());
    let mut ss = Vec::with_capacity(factors.len());
    let mut vs = Vec::with_capacity(factors.len());
    for f in factors {
        let mut s = CMatrix::zeros((n1, n2));
        for (j, &sv) in f.sigma.iter().enumerate() {
            s[[j, j]] = Complex64::new(sv, 0.0);
        }
        us.push(f.u);
        ss.push(s);
        vs.push(f.v);
    }
    let back = |slices: Vec<CMatrix>| -> Result<Tensor3> {
        idft_mode3(&CTensor3::from_slices(&mirror_into_full(slices, n3))?)
    };
    Ok(TsvdFactors {
        u: back(us)?,
        s: back(ss)?,
        v: back(vs)?,
    })
}

/// Soft-thresholds every Fourier slice's singular values at `tau`.
///
/// This is the closed-form minimizer of `1/(2·tau)·‖W − t‖_F² + ‖W‖_*` with
/// `‖·‖_*` the tensor nuclear norm.
pub fn truncated_tsvd(t: &Tensor3, tau: f64) -> Result<Tensor3> {
    if tau < 0.0 || tau.is_nan() {
        return Err(TensorError::NegativeThreshold(tau));
    }
    let n3 = t.dims().2;
    let spec = dft_mode3(t);
    let head = (0..independent_slices(n3))
        .into_par_iter()
        .map(|k| truncated_svd_matrix(spec.slice(k), tau))
        .collect::<Result<Vec<_>>>()?;
    idft_mode3(&CTensor3::from_slices(&mirror_into_full(head, n3))?)
}

fn fourier_singular_values(t: &Tensor3) -> Result<Vec<Vec<f64>>> {
    let spec = dft_mode3(t);
    (0..independent_slices(t.dims().2))
        .into_par_iter()
        .map(|k| singular_values(spec.slice(k)))
        .collect()
}

/// Sorted singular values of every Fourier slice, including mirrored ones.
pub fn all_fourier_singular_values(t: &Tensor3) -> Result<Vec<Vec<f64>>> {
    let n3 = t.dims().2;
    let mut head = fourier_singular_values(t)?;
    for k in head.len()..n3 {
        head.push(head[n3 - k].clone());
    }
    Ok(head)
}

/// Tensor nuclear norm: mean of the nuclear norms of the Fourier slices.
pub fn tnn(t: &Tensor3) -> Result<f64> {
    let n3 = t.dims().2;
    let svs = fourier_singular_values(t)?;
    let total: f64 = svs
        .iter()
        .enumerate()
        .map(|(k, s)| mirror_weight(k, n3) * s.iter().sum::<f64>())
        .sum();
    Ok(total / n3 as f64)
}

/// Largest per-slice rank in the Fourier domain, ignoring singular values
/// below `RANK_FLOOR` times the overall maximum.
pub fn numerical_tubal_rank(t: &Tensor3) -> Result<usize> {
    let svs = fourier_singular_values(t)?;
    let max = svs.iter().flat_map(|s| s.first().copied()).fold(0.0, f64::max);
    Ok(svs
        .iter()
        .map(|s| s.iter().filter(|&&v| v > RANK_FLOOR * max && v > 0.0).count())
        .max()
        .unwrap_or(0))
}

/// `coeff·‖w − w_n‖_F² + tnn(w)`.
pub fn prox_objective(w: &Tensor3, w_n: &Tensor3, coeff: f64) -> Result<f64> {
    let d = w.distance(w_n)?;
    Ok(coeff * d * d + tnn(w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::identity_tensor;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n1: usize, n2: usize, n3: usize, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n1 * n2 * n3).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor3::new(data, n1, n2, n3).unwrap()
    }

    fn diag21_twice() -> Tensor3 {
        let d = array![[2.0, 0.0], [0.0, 1.0]];
        Tensor3::from_slices(&[d.clone(), d]).unwrap()
    }

    #[test]
    fn zero_tensor_has_zero_core() {
        let t = Tensor3::zeros(3, 2, 4).unwrap();
        let f = tsvd(&t).unwrap();
        assert!(f.s.is_zero());
    }

    #[test]
    fn single_slice_reduces_to_matrix_svd() {
        let t = random(4, 3, 1, 2);
        let f = tsvd(&t).unwrap();
        let m = t.slice(0).mapv(|v| Complex64::new(v, 0.0));
        let sv = svd_complex(m.view()).unwrap().sigma;
        for (j, s) in sv.iter().enumerate() {
            assert!((f.s.get(j, j, 0) - s).abs() <= 1e-12);
        }
    }

    #[test]
    fn random_tsvd_reconstructs() {
        let t = random(4, 3, 5, 17);
        let f = tsvd(&t).unwrap();
        let err = f.reconstruct().unwrap().distance(&t).unwrap();
        assert!(err <= 1e-8 * t.frobenius(), "{err}");
    }

    #[test]
    fn tsvd_factors_are_t_orthogonal_and_f_diagonal() {
        let t = random(3, 4, 4, 5);
        let f = tsvd(&t).unwrap();
        for (q, n) in [(&f.u, 3), (&f.v, 4)] {
            let g = t_product(q, &q.conj_transpose()).unwrap();
            let err = g.distance(&identity_tensor(n, 4).unwrap()).unwrap();
            assert!(err <= 1e-8 * q.frobenius());
        }
        let spec = dft_mode3(&f.s);
        for k in 0..4 {
            let s = spec.slice(k);
            let mut prev = f64::INFINITY;
            for i in 0..3 {
                for j in 0..4 {
                    if i == j {
                        assert!(s[[i, j]].im.abs() <= 1e-9 && s[[i, j]].re >= -1e-12);
                        assert!(s[[i, j]].re <= prev + 1e-12);
                        prev = s[[i, j]].re;
                    } else {
                        assert!(s[[i, j]].norm() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn truncation_of_repeated_diagonal() {
        let out = truncated_tsvd(&diag21_twice(), 1.0).unwrap();
        let want = array![[1.5, 0.0], [0.0, 0.5]];
        for k in 0..2 {
            for (a, b) in out.slice(k).iter().zip(want.iter()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_threshold_is_identity() {
        let t = random(4, 5, 6, 9);
        let out = truncated_tsvd(&t, 0.0).unwrap();
        assert!(out.distance(&t).unwrap() <= 1e-9 * t.frobenius());
    }

    #[test]
    fn huge_threshold_annihilates() {
        let t = random(3, 3, 3, 4);
        let out = truncated_tsvd(&t, 1e6).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn tnn_examples() {
        let t = Tensor3::new(vec![3.0, 3.0], 1, 1, 2).unwrap();
        assert!((tnn(&t).unwrap() - 3.0).abs() <= 1e-12);
        assert_eq!(tnn(&Tensor3::zeros(2, 3, 4).unwrap()).unwrap(), 0.0);
        assert!((tnn(&diag21_twice()).unwrap() - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn tnn_counts_mirrored_slices() {
        // Direct average over every Fourier slice, mirrors included.
        for n3 in [1, 2, 3, 4, 5] {
            let t = random(3, 2, n3, n3 as u64);
            let spec = dft_mode3(&t);
            let direct: f64 = (0..n3)
                .map(|k| svd_complex(spec.slice(k)).unwrap().sigma.iter().sum::<f64>())
                .sum::<f64>()
                / n3 as f64;
            assert!((tnn(&t).unwrap() - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn truncation_never_raises_tnn() {
        let t = random(4, 3, 5, 31);
        let before = tnn(&t).unwrap();
        let mut last = before;
        for i in 0..10 {
            let tau = 0.2 * i as f64;
            let now = tnn(&truncated_tsvd(&t, tau).unwrap()).unwrap();
            assert!(now <= before + 1e-9);
            assert!(now <= last + 1e-9);
            last = now;
        }
    }

    #[test]
    fn tubal_rank_of_rank_one_stack() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let t = Tensor3::from_slices(&[a.clone(), a.clone() * 3.0, a * -1.0]).unwrap();
        assert_eq!(numerical_tubal_rank(&t).unwrap(), 1);
        assert_eq!(numerical_tubal_rank(&Tensor3::zeros(2, 2, 2).unwrap()).unwrap(), 0);
    }

    #[test]
    fn prox_objective_examples() {
        let z = Tensor3::zeros(2, 3, 2).unwrap();
        assert_eq!(prox_objective(&z, &z, 0.7).unwrap(), 0.0);
        let w_n = random(2, 3, 2, 3);
        let v = prox_objective(&z, &w_n, 0.7).unwrap();
        assert!((v - 0.7 * w_n.frobenius_sq()).abs() <= 1e-12);
        assert!(prox_objective(&z, &Tensor3::zeros(3, 2, 2).unwrap(), 1.0).is_err());
    }
}
