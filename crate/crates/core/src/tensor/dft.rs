//! Mode-3 discrete Fourier transform.
//!
//! Forward transform is unnormalized (`ω = e^{−2πi/n3}`), the inverse carries
//! the `1/n3` factor. Under this convention the first Fourier slice of a
//! tensor is the plain sum of its frontal slices.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::{CTensor3, Result, Tensor3, TensorError};

/// Relative bound on the imaginary part discarded by [`idft_mode3`].
const IMAG_TOL: f64 = 1e-9;

fn transform_tubes(data: &mut [Complex64], dims: (usize, usize, usize), dir: FftDirection) {
    let (n1, n2, n3) = dims;
    if n3 == 1 {
        return;
    }
    let plane = n1 * n2;
    // Gather tubes contiguously so one planner call handles the whole batch.
    let mut tubes = vec![Complex64::new(0.0, 0.0); plane * n3];
    for p in 0..plane {
        for k in 0..n3 {
            tubes[p * n3 + k] = data[k * plane + p];
        }
    }
    let fft = FftPlanner::new().plan_fft(n3, dir);
    fft.process(&mut tubes);
    for p in 0..plane {
        for k in 0..n3 {
            data[k * plane + p] = tubes[p * n3 + k];
        }
    }
}

pub fn dft_mode3(t: &Tensor3) -> CTensor3 {
    let dims = t.dims();
    let mut data: Vec<Complex64> = t.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_tubes(&mut data, dims, FftDirection::Forward);
    CTensor3::new(data, dims.0, dims.1, dims.2).expect("DFT of a finite tensor is finite")
}

/// Inverse transform back to a real tensor.
///
/// Fails with [`TensorError::SymmetryViolation`] if the result carries an
/// imaginary part above `1e-9·‖t‖_F`, i.e. the spectrum did not come from a
/// real tensor.
pub fn idft_mode3(t: &CTensor3) -> Result<Tensor3> {
    let dims = t.dims();
    let mut data = t.data().to_vec();
    transform_tubes(&mut data, dims, FftDirection::Inverse);
    let scale = 1.0 / dims.2 as f64;
    let tol = IMAG_TOL * t.frobenius();
    let mut residue: f64 = 0.0;
    let real = data
        .iter()
        .map(|z| {
            residue = residue.max((z.im * scale).abs());
            z.re * scale
        })
        .collect();
    if residue > tol {
        return Err(TensorError::SymmetryViolation { residue, tol });
    }
    Tensor3::new(real, dims.0, dims.1, dims.2)
}
