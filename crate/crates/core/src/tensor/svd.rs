//! Complex matrix SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The sweep order is fixed and cyclic, so the factors are a deterministic
//! function of the input. Column phases are normalized so that the
//! largest-magnitude entry of every left singular vector is real and
//! positive.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use super::{Result, TensorError};

pub type CMatrix = Array2<Complex64>;

/// Singular values below `RANK_FLOOR · σ_max` count as zero when reporting rank.
pub const RANK_FLOOR: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub max_sweeps: usize,
    /// A column pair is rotated while `|a_pᴴa_q| > tol·‖a_p‖‖a_q‖`.
    pub tol: f64,
    pub max_dim: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 60,
            tol: 1e-12,
            max_dim: 4096,
        }
    }
}

/// Full SVD `M = U·diag(σ)·Vᴴ` with `U` `m×m`, `V` `n×n` and `min(m, n)`
/// singular values in nonincreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> CMatrix {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let mut out = CMatrix::zeros((m, n));
        for (j, &s) in self.sigma.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for r in 0..m {
                let us = self.u[[r, j]] * s;
                for c in 0..n {
                    out[[r, c]] += us * self.v[[c, j]].conj();
                }
            }
        }
        out
    }

    /// Number of singular values above `RANK_FLOOR · σ_max`.
    pub fn rank(&self) -> usize {
        let max = self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().filter(|&&s| s > RANK_FLOOR * max).count()
    }
}

fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

fn check_input(m: &ArrayView2<'_, Complex64>, opts: &SvdOptions) -> Result<()> {
    let (rows, cols) = m.dim();
    if rows > opts.max_dim || cols > opts.max_dim {
        return Err(TensorError::TooLarge {
            rows,
            cols,
            cap: opts.max_dim,
        });
    }
    if rows == 0 || cols == 0 {
        return Err(TensorError::DimMismatch(format!("empty matrix {rows}x{cols}")));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(TensorError::NonFinite(
            m.iter()
                .position(|z| !z.re.is_finite() || !z.im.is_finite())
                .unwrap_or(0),
        ));
    }
    Ok(())
}

/// Columns of `m`, or of `mᴴ` when `conj_t` is set.
fn columns(m: &ArrayView2<'_, Complex64>, conj_t: bool) -> Vec<Vec<Complex64>> {
    if conj_t {
        m.rows()
            .into_iter()
            .map(|r| r.iter().map(|z| z.conj()).collect())
            .collect()
    } else {
        m.columns().into_iter().map(|c| c.to_vec()).collect()
    }
}

/// Orthogonalizes the columns in place and returns the accumulated right
/// rotation `V` (as columns). On return the columns of `a` are `M·V`.
fn jacobi(a: &mut [Vec<Complex64>], opts: &SvdOptions) -> Result<Vec<Vec<Complex64>>> {
    let n = a.len();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect())
        .collect();
    for _ in 0..opts.max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm_sq(&a[p]);
                let beta = norm_sq(&a[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot_h(&a[p], &a[q]);
                let g = gamma.norm();
                if g <= opts.tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate a_p against e^{-iφ}·a_q, whose inner product with a_p is real.
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(a, p, q, phase, c, s);
                rotate(&mut v, p, q, phase, c, s);
            }
        }
        if !rotated {
            return Ok(v);
        }
    }
    Err(TensorError::NoConvergence(opts.max_sweeps))
}

fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, phase: Complex64, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = phase * *y;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

/// Column order by nonincreasing norm; ties keep their original order.
fn descending_order(sigma: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sigma.len()).collect();
    idx.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    idx
}

/// Extends `basis` (orthonormal, length-`dim` vectors, `None` = missing) to a
/// full orthonormal basis. Each gap is filled with the standard basis vector
/// whose residual after projection is largest.
fn complete_basis(basis: &mut [Option<Vec<Complex64>>], dim: usize) {
    for slot in 0..basis.len() {
        if basis[slot].is_some() {
            continue;
        }
        let known: Vec<Vec<Complex64>> = basis.iter().flatten().cloned().collect();
        let mut best: Option<(f64, Vec<Complex64>)> = None;
        for i in 0..dim {
            let mut r = vec![ZERO; dim];
            r[i] = ONE;
            for _ in 0..2 {
                for q in &known {
                    let proj = dot_h(q, &r);
                    for (ri, qi) in r.iter_mut().zip(q) {
                        *ri -= proj * qi;
                    }
                }
            }
            let nr = norm_sq(&r).sqrt();
            if best.as_ref().is_none_or(|(b, _)| nr > *b) {
                best = Some((nr, r));
            }
        }
        let (nr, mut r) = best.expect("dim >= 1");
        for ri in r.iter_mut() {
            *ri /= nr;
        }
        basis[slot] = Some(r);
    }
}

fn to_matrix(cols: Vec<Option<Vec<Complex64>>>, dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros((dim, cols.len()));
    for (j, col) in cols.into_iter().enumerate() {
        for (i, z) in col.expect("basis completed").into_iter().enumerate() {
            m[[i, j]] = z;
        }
    }
    m
}

/// Phase that makes the largest-magnitude entry of `col` real-positive.
fn leading_phase(col: &[Complex64]) -> Complex64 {
    let mut best = 0;
    for (i, z) in col.iter().enumerate() {
        if z.norm() > col[best].norm() {
            best = i;
        }
    }
    let z = col[best];
    if z.norm() == 0.0 {
        ONE
    } else {
        (z / z.norm()).conj()
    }
}

pub fn svd_complex(m: ArrayView2<'_, Complex64>) -> Result<SvdFactors> {
    svd_complex_with(m, &SvdOptions::default())
}

pub fn svd_complex_with(m: ArrayView2<'_, Complex64>, opts: &SvdOptions) -> Result<SvdFactors> {
    check_input(&m, opts)?;
    let (rows, cols) = m.dim();
    let wide = rows < cols;
    // Work on the tall orientation; for wide inputs the roles of U and V swap.
    let (long, short) = if wide { (cols, rows) } else { (rows, cols) };
    let mut a = columns(&m, wide);
    let rot = jacobi(&mut a, opts)?;

    let norms: Vec<f64> = a.iter().map(|c| norm_sq(c).sqrt()).collect();
    let order = descending_order(&norms);
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let smax = sigma[0];
    let floor = f64::EPSILON * smax * long as f64;

    // `thin` spans the long side, `full` the short side.
    let mut thin: Vec<Option<Vec<Complex64>>> = vec![None; long];
    let mut full: Vec<Vec<Complex64>> = Vec::with_capacity(short);
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > floor && norms[j] > 0.0 {
            thin[slot] = Some(a[j].iter().map(|z| z / norms[j]).collect());
        }
        full.push(rot[j].clone());
    }
    complete_basis(&mut thin, long);

    let mut thin: Vec<Vec<Complex64>> = thin.into_iter().map(|c| c.expect("completed")).collect();
    {
        let (u_cols, v_cols): (&mut [Vec<Complex64>], &mut [Vec<Complex64>]) = if wide {
            (&mut full, &mut thin)
        } else {
            (&mut thin, &mut full)
        };
        for j in 0..u_cols.len() {
            let ph = leading_phase(&u_cols[j]);
            u_cols[j].iter_mut().for_each(|z| *z *= ph);
            if j < short {
                v_cols[j].iter_mut().for_each(|z| *z *= ph);
            }
        }
        for col in v_cols.iter_mut().skip(short) {
            let ph = leading_phase(col);
            col.iter_mut().for_each(|z| *z *= ph);
        }
    }
    let thin_m = to_matrix(thin.into_iter().map(Some).collect(), long);
    let full_m = to_matrix(full.into_iter().map(Some).collect(), short);
    let (u, v) = if wide { (full_m, thin_m) } else { (thin_m, full_m) };
    Ok(SvdFactors { u, sigma, v })
}

/// Singular values only, nonincreasing.
pub(crate) fn singular_values(m: ArrayView2<'_, Complex64>) -> Result<Vec<f64>> {
    let opts = SvdOptions::default();
    check_input(&m, &opts)?;
    let mut a = columns(&m, m.nrows() < m.ncols());
    jacobi(&mut a, &opts)?;
    let mut s: Vec<f64> = a.iter().map(|c| norm_sq(c).sqrt()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Singular value soft-thresholding: `U·diag(max(σ − τ, 0))·Vᴴ`.
///
/// Evaluated as `(M·V)·diag(max(1 − τ/σ, 0))·Vᴴ`, which never forms `U`.
pub fn truncated_svd_matrix(m: ArrayView2<'_, Complex64>, tau: f64) -> Result<CMatrix> {
    if tau < 0.0 || tau.is_nan() {
        return Err(TensorError::NegativeThreshold(tau));
    }
    let opts = SvdOptions::default();
    check_input(&m, &opts)?;
    let (rows, cols) = m.dim();
    let wide = rows < cols;
    let mut a = columns(&m, wide);
    let rot = jacobi(&mut a, &opts)?;
    let (long, short) = if wide { (cols, rows) } else { (rows, cols) };
    // Tall-orientation result, long × short.
    let mut out = CMatrix::zeros((long, short));
    for (aj, vj) in a.iter().zip(&rot) {
        let s = norm_sq(aj).sqrt();
        if s == 0.0 || s <= tau {
            continue;
        }
        let f = 1.0 - tau / s;
        for r in 0..long {
            let x = aj[r] * f;
            for c in 0..short {
                out[[r, c]] += x * vj[c].conj();
            }
        }
    }
    Ok(if wide { out.t().mapv(|z| z.conj()) } else { out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_shape_fn((rows, cols), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn fro(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn unitarity_error(q: &CMatrix) -> f64 {
        let g = q.t().mapv(|z| z.conj()).dot(q);
        let n = g.nrows();
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((g[[i, j]] - c(target)).norm());
            }
        }
        err
    }

    #[test]
    fn diagonal_matrix() {
        let m = ndarray::array![[c(3.0), c(0.0)], [c(0.0), c(1.0)]];
        let f = svd_complex(m.view()).unwrap();
        assert_eq!(f.sigma, vec![3.0, 1.0]);
    }

    #[test]
    fn zero_matrix_gives_identity_factors() {
        let m = CMatrix::zeros((3, 2));
        let f = svd_complex(m.view()).unwrap();
        assert_eq!(f.sigma, vec![0.0, 0.0]);
        assert_eq!(f.u, CMatrix::eye(3));
        assert_eq!(f.v, CMatrix::eye(2));
    }

    #[test]
    fn random_tall_and_wide_reconstruct() {
        for (rows, cols, seed) in [(5, 3, 1), (3, 5, 2), (4, 4, 3), (1, 6, 4), (7, 1, 5)] {
            let m = random(rows, cols, seed);
            let f = svd_complex(m.view()).unwrap();
            assert_eq!(f.u.dim(), (rows, rows));
            assert_eq!(f.v.dim(), (cols, cols));
            let err = fro(&(&f.reconstruct() - &m)) / fro(&m);
            assert!(err <= 1e-10, "{rows}x{cols}: {err}");
            assert!(unitarity_error(&f.u) <= 1e-9);
            assert!(unitarity_error(&f.v) <= 1e-9);
            assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    /// σ² are the roots of det(MᴴM − λI); for a 3×3 Hermitian Gram matrix the
    /// characteristic polynomial is a real cubic, solved here by bisection.
    #[test]
    fn squared_singular_values_are_gram_eigenvalues() {
        let m = random(5, 3, 9);
        let g = m.t().mapv(|z| z.conj()).dot(&m);
        let det3 = |l: f64| -> f64 {
            let a = |i: usize, j: usize| g[[i, j]] - if i == j { c(l) } else { c(0.0) };
            (a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)))
            .re
        };
        let upper = g.iter().map(|z| z.norm()).sum::<f64>() + 1.0;
        let grid: Vec<f64> = (0..=20000).map(|i| upper * i as f64 / 20000.0).collect();
        let mut roots = Vec::new();
        for w in grid.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            if det3(lo).signum() == det3(hi).signum() {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if det3(lo).signum() == det3(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        roots.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(roots.len(), 3);
        let f = svd_complex(m.view()).unwrap();
        for (s, r) in f.sigma.iter().zip(&roots) {
            assert!((s * s - r).abs() <= 1e-9 * roots[0], "{} vs {}", s * s, r);
        }
    }

    #[test]
    fn phase_convention_makes_leading_entries_real_positive() {
        let f = svd_complex(random(4, 3, 21).view()).unwrap();
        for col in f.u.columns() {
            let best = col
                .iter()
                .copied()
                .fold(c(0.0), |b, z| if z.norm() > b.norm() { z } else { b });
            assert!(best.re > 0.0 && best.im.abs() <= 1e-14);
        }
    }

    #[test]
    fn deterministic_factors() {
        let m = random(6, 4, 33);
        assert_eq!(svd_complex(m.view()).unwrap(), svd_complex(m.view()).unwrap());
    }

    #[test]
    fn sweep_limit_reports_no_convergence() {
        let opts = SvdOptions {
            max_sweeps: 1,
            ..SvdOptions::default()
        };
        let m = random(6, 5, 5);
        assert!(matches!(
            svd_complex_with(m.view(), &opts),
            Err(TensorError::NoConvergence(1))
        ));
    }

    #[test]
    fn size_cap_is_enforced() {
        let opts = SvdOptions {
            max_dim: 3,
            ..SvdOptions::default()
        };
        let m = CMatrix::zeros((4, 2));
        assert!(matches!(
            svd_complex_with(m.view(), &opts),
            Err(TensorError::TooLarge { .. })
        ));
    }

    #[test]
    fn svt_on_diagonal() {
        let mut m = CMatrix::zeros((3, 3));
        m[[0, 0]] = c(5.0);
        m[[1, 1]] = c(2.0);
        m[[2, 2]] = c(0.5);
        let out = truncated_svd_matrix(m.view(), 1.0).unwrap();
        let mut want = CMatrix::zeros((3, 3));
        want[[0, 0]] = c(4.0);
        want[[1, 1]] = c(1.0);
        assert!(fro(&(&out - &want)) <= 1e-12);
    }

    #[test]
    fn svt_zero_threshold_is_identity() {
        for (r, cc) in [(4, 3), (3, 4)] {
            let m = random(r, cc, 8);
            let out = truncated_svd_matrix(m.view(), 0.0).unwrap();
            assert!(fro(&(&out - &m)) <= 1e-10 * fro(&m));
        }
    }

    #[test]
    fn svt_shrinks_singular_values() {
        for (r, cc) in [(4, 3), (3, 5)] {
            let m = random(r, cc, 12);
            let before = svd_complex(m.view()).unwrap().sigma;
            let tau = 0.3;
            let out = truncated_svd_matrix(m.view(), tau).unwrap();
            let after = svd_complex(out.view()).unwrap().sigma;
            for (b, a) in before.iter().zip(&after) {
                assert!((a - (b - tau).max(0.0)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn svt_rejects_negative_threshold() {
        let m = random(2, 2, 1);
        assert!(truncated_svd_matrix(m.view(), -1.0).is_err());
    }

    /// SVT is the prox of the nuclear norm: the output minimizes
    /// `1/(2τ)·‖X − M‖² + ‖X‖_*`, so random perturbations never lower it.
    #[test]
    fn svt_is_a_local_minimizer() {
        let tau = 0.3;
        let m = random(4, 3, 77);
        let x = truncated_svd_matrix(m.view(), tau).unwrap();
        let objective = |y: &CMatrix| -> f64 {
            let d = fro(&(y - &m));
            let nuc: f64 = svd_complex(y.view()).unwrap().sigma.iter().sum();
            d * d / (2.0 * tau) + nuc
        };
        let base = objective(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let dir = CMatrix::from_shape_fn((4, 3), |_| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let dir = &dir / c(fro(&dir));
            for eps in [1e-3, 1e-2] {
                let y = &x + &(&dir * c(eps));
                assert!(objective(&y) >= base - 1e-12);
            }
        }
    }
}
