//! Third-order tensor algebra.
//!
//! Tensors are `n1 × n2 × n3` arrays of frontal slices. All transforms run
//! along the third mode: a forward DFT of every tube, per-slice matrix work
//! in the Fourier domain, then the inverse DFT. This is the machinery behind
//! the t-product, the tensor SVD, the tensor nuclear norm and singular value
//! thresholding of stacked client parameters.

mod dft;
mod io;
mod product;
mod svd;
mod tsvd;

pub use dft::{dft_mode3, idft_mode3};
pub use io::{read_t3r, read_t3r_all, write_t3r, write_t3r_all, T3R_MAGIC};
pub use product::{bcirc, fold, identity_tensor, t_product, t_product_bcirc, unfold};
pub use svd::{svd_complex, svd_complex_with, truncated_svd_matrix, CMatrix, SvdFactors, SvdOptions, RANK_FLOOR};
pub use tsvd::{
    all_fourier_singular_values, numerical_tubal_rank, prox_objective, tnn, truncated_tsvd, tsvd, TsvdFactors,
};

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid dimensions {0}x{1}x{2}: every mode must be at least 1")]
    ZeroDim(usize, usize, usize),
    #[error("data length {got} does not match dims product {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("spectrum is not conjugate-symmetric (imaginary residue {residue:e}, tolerance {tol:e})")]
    SymmetryViolation { residue: f64, tol: f64 },
    #[error("SVD did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix {rows}x{cols} exceeds the configured SVD cap {cap}")]
    TooLarge { rows: usize, cols: usize, cap: usize },
    #[error("negative threshold {0}")]
    NegativeThreshold(f64),
    #[error("malformed tensor file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Real `n1 × n2 × n3` tensor. Storage is slice-major, row-major within each
/// frontal slice: entry `(i, j, k)` lives at `k·n1·n2 + i·n2 + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    data: Vec<f64>,
    dims: (usize, usize, usize),
}

impl Tensor3 {
    pub fn new(data: Vec<f64>, n1: usize, n2: usize, n3: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(TensorError::ZeroDim(n1, n2, n3));
        }
        let expected = n1 * n2 * n3;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Self {
            data,
            dims: (n1, n2, n3),
        })
    }

    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        Self::new(vec![0.0; n1 * n2 * n3], n1, n2, n3)
    }

    /// Builds a tensor whose k-th frontal slice is `slices[k]`.
    pub fn from_slices(slices: &[Array2<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| TensorError::DimMismatch("no slices".into()))?;
        let (n1, n2) = first.dim();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            if s.dim() != (n1, n2) {
                return Err(TensorError::DimMismatch(format!(
                    "slice {:?} differs from {:?}",
                    s.dim(),
                    (n1, n2)
                )));
            }
            data.extend(s.iter().copied());
        }
        Self::new(data, n1, n2, slices.len())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (n1, n2, _) = self.dims;
        self.data[k * n1 * n2 + i * n2 + j]
    }

    pub fn slice(&self, k: usize) -> ArrayView2<'_, f64> {
        let (n1, n2, _) = self.dims;
        let len = n1 * n2;
        ArrayView2::from_shape((n1, n2), &self.data[k * len..(k + 1) * len]).expect("slice shape matches storage")
    }

    pub fn slices(&self) -> Vec<Array2<f64>> {
        (0..self.dims.2).map(|k| self.slice(k).to_owned()).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// `‖self − other‖_F`, or an error if the shapes differ.
    pub fn distance(&self, other: &Tensor3) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn add_scaled(&self, other: &Tensor3, alpha: f64) -> Result<Tensor3> {
        self.check_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        Tensor3::new(data, self.dims.0, self.dims.1, self.dims.2)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(TensorError::DimMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    /// Real tensor transpose: each frontal slice is transposed and slices
    /// 2..n3 are reversed. For real tensors this is the conjugate transpose
    /// under the t-product.
    pub fn conj_transpose(&self) -> Tensor3 {
        let (n1, n2, n3) = self.dims;
        let mut data = vec![0.0; n1 * n2 * n3];
        for k in 0..n3 {
            let src = (n3 - k) % n3;
            for i in 0..n1 {
                for j in 0..n2 {
                    data[k * n1 * n2 + j * n1 + i] = self.data[src * n1 * n2 + i * n2 + j];
                }
            }
        }
        Tensor3 {
            data,
            dims: (n2, n1, n3),
        }
    }
}

/// Complex counterpart of [`Tensor3`] with the same layout; holds Fourier-
/// domain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CTensor3 {
    data: Vec<Complex64>,
    dims: (usize, usize, usize),
}

impl CTensor3 {
    pub fn new(data: Vec<Complex64>, n1: usize, n2: usize, n3: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(TensorError::ZeroDim(n1, n2, n3));
        }
        let expected = n1 * n2 * n3;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Self {
            data,
            dims: (n1, n2, n3),
        })
    }

    pub fn from_slices(slices: &[CMatrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| TensorError::DimMismatch("no slices".into()))?;
        let (n1, n2) = first.dim();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            if s.dim() != (n1, n2) {
                return Err(TensorError::DimMismatch(format!(
                    "slice {:?} differs from {:?}",
                    s.dim(),
                    (n1, n2)
                )));
            }
            data.extend(s.iter().copied());
        }
        Self::new(data, n1, n2, slices.len())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn slice(&self, k: usize) -> ArrayView2<'_, Complex64> {
        let (n1, n2, _) = self.dims;
        let len = n1 * n2;
        ArrayView2::from_shape((n1, n2), &self.data[k * len..(k + 1) * len]).expect("slice shape matches storage")
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Largest deviation from `slice(k) = conj(slice(n3 − k))` (0-based),
    /// the symmetry every spectrum of a real tensor has.
    pub fn symmetry_residue(&self) -> f64 {
        let n3 = self.dims.2;
        let mut worst: f64 = 0.0;
        for k in 0..n3 {
            let mirror = (n3 - k) % n3;
            for (a, b) in self.slice(k).iter().zip(self.slice(mirror).iter()) {
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }
}
