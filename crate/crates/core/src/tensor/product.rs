//! Block-circulant matricization and the t-product.

use ndarray::{s, Array2};
use num_complex::Complex64;

use super::dft::{dft_mode3, idft_mode3};
use super::{CMatrix, CTensor3, Result, Tensor3, TensorError};

/// `(n1·n3) × (n2·n3)` block-circulant matrix; block `(r, c)` is frontal
/// slice `(r − c) mod n3`.
pub fn bcirc(t: &Tensor3) -> Array2<f64> {
    let (n1, n2, n3) = t.dims();
    let mut out = Array2::zeros((n1 * n3, n2 * n3));
    for r in 0..n3 {
        for c in 0..n3 {
            let k = (r + n3 - c) % n3;
            out.slice_mut(s![r * n1..(r + 1) * n1, c * n2..(c + 1) * n2])
                .assign(&t.slice(k));
        }
    }
    out
}

/// Stacks the frontal slices vertically into an `(n1·n3) × n2` matrix.
pub fn unfold(t: &Tensor3) -> Array2<f64> {
    let (n1, n2, n3) = t.dims();
    Array2::from_shape_vec((n1 * n3, n2), t.data().to_vec()).expect("storage is slice-major")
}

/// Inverse of [`unfold`]: splits an `(n1·n3) × n2` matrix into `n3` slices.
pub fn fold(m: &Array2<f64>, n3: usize) -> Result<Tensor3> {
    let (rows, n2) = m.dim();
    if n3 == 0 || rows % n3 != 0 {
        return Err(TensorError::DimMismatch(format!(
            "{rows} rows cannot be split into {n3} slices"
        )));
    }
    Tensor3::new(m.iter().copied().collect(), rows / n3, n2, n3)
}

/// t-product identity: first frontal slice is `I_n`, the rest are zero.
pub fn identity_tensor(n: usize, n3: usize) -> Result<Tensor3> {
    let mut data = vec![0.0; n * n * n3];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    Tensor3::new(data, n, n, n3)
}

fn check_product_dims(a: &Tensor3, b: &Tensor3) -> Result<()> {
    let (_, a2, a3) = a.dims();
    let (b1, _, b3) = b.dims();
    if a2 != b1 || a3 != b3 {
        return Err(TensorError::DimMismatch(format!(
            "t-product of {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// t-product computed slice-wise in the Fourier domain. Only the first
/// `⌊n3/2⌋ + 1` slices are multiplied; the rest are conjugate mirrors.
pub fn t_product(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    check_product_dims(a, b)?;
    let (n1, _, n3) = a.dims();
    let n4 = b.dims().1;
    let fa = dft_mode3(a);
    let fb = dft_mode3(b);
    let half = n3 / 2 + 1;
    let mut slices: Vec<CMatrix> = Vec::with_capacity(n3);
    for k in 0..half {
        slices.push(fa.slice(k).dot(&fb.slice(k)));
    }
    for k in half..n3 {
        let mirror = slices[n3 - k].mapv(|z: Complex64| z.conj());
        slices.push(mirror);
    }
    debug_assert!(slices.iter().all(|m| m.dim() == (n1, n4)));
    idft_mode3(&CTensor3::from_slices(&slices)?)
}

/// t-product through `fold(bcirc(a) · unfold(b))`. Quadratic in `n3`; kept as
/// the reference route.
pub fn t_product_bcirc(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    check_product_dims(a, b)?;
    fold(&bcirc(a).dot(&unfold(b)), a.dims().2)
}
