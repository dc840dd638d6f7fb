//! Small dense complex linear-algebra helpers shared by the metrics, the
//! conic solver and the SCA builders.
//!
//! Hermitian `m x m` matrices are parametrized by `m^2` real numbers: the
//! `m` diagonal entries first, then for every pair `a < b` (row-major) the
//! real and imaginary part of entry `(a, b)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const J: C64 = C64::new(0.0, 1.0);

/// Number of real parameters of an `m x m` Hermitian matrix.
pub fn hermitian_param_count(m: usize) -> usize {
    m * m
}

/// Index of the first off-diagonal parameter pair for `(a, b)`, `a < b`.
fn pair_offset(m: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < m);
    // pairs before row a: sum_{r<a} (m - 1 - r)
    let before = a * (2 * m - a - 1) / 2;
    m + 2 * (before + (b - a - 1))
}

/// Row/column of each parameter: `(a, b, is_imag)`; diagonal entries have `a == b`.
pub fn hermitian_param_positions(m: usize) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::with_capacity(m * m);
    for a in 0..m {
        out.push((a, a, false));
    }
    for a in 0..m {
        for b in (a + 1)..m {
            out.push((a, b, false));
            out.push((a, b, true));
        }
    }
    out
}

/// Nonzero entries of the basis matrix for parameter `p`.
pub fn hermitian_basis_entries(m: usize, p: usize) -> Vec<(usize, usize, C64)> {
    let (a, b, imag) = hermitian_param_positions(m)[p];
    if a == b {
        vec![(a, a, ONE)]
    } else if !imag {
        vec![(a, b, ONE), (b, a, ONE)]
    } else {
        vec![(a, b, J), (b, a, -J)]
    }
}

pub fn hermitian_from_params(m: usize, params: &[f64]) -> CMat {
    assert_eq!(params.len(), m * m, "hermitian parameter length");
    let mut q = CMat::zeros(m, m);
    for a in 0..m {
        q[(a, a)] = C64::new(params[a], 0.0);
    }
    for a in 0..m {
        for b in (a + 1)..m {
            let o = pair_offset(m, a, b);
            let z = C64::new(params[o], params[o + 1]);
            q[(a, b)] = z;
            q[(b, a)] = z.conj();
        }
    }
    q
}

/// Inverse of [`hermitian_from_params`]; uses the upper triangle.
pub fn hermitian_to_params(q: &CMat) -> Vec<f64> {
    let m = q.nrows();
    let mut out = vec![0.0; m * m];
    for a in 0..m {
        out[a] = q[(a, a)].re;
    }
    for a in 0..m {
        for b in (a + 1)..m {
            let o = pair_offset(m, a, b);
            out[o] = q[(a, b)].re;
            out[o + 1] = q[(a, b)].im;
        }
    }
    out
}

/// Coefficients `c` with `Re tr(A Q) = sum_p c_p x_p` for the parametrized `Q`.
pub fn trace_functional_coeffs(a: &CMat) -> Vec<f64> {
    let m = a.nrows();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i] = a[(i, i)].re;
    }
    for i in 0..m {
        for k in (i + 1)..m {
            let o = pair_offset(m, i, k);
            // E = e_i e_k^T + e_k e_i^T  ->  tr(A E) = A[k,i] + A[i,k]
            out[o] = (a[(k, i)] + a[(i, k)]).re;
            // E = j e_i e_k^T - j e_k e_i^T -> tr(A E) = j A[k,i] - j A[i,k]
            out[o + 1] = (J * a[(k, i)] - J * a[(i, k)]).re;
        }
    }
    out
}

/// Coefficients of the real-linear functional `v^H Q v`.
pub fn quad_form_coeffs(v: &CVec) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i] = v[i].norm_sqr();
    }
    for i in 0..m {
        for k in (i + 1)..m {
            let o = pair_offset(m, i, k);
            let z = v[i].conj() * v[k];
            out[o] = 2.0 * z.re;
            out[o + 1] = -2.0 * z.im;
        }
    }
    out
}

/// `v^H Q v` (real part; exact for Hermitian `Q`).
pub fn quad_form(q: &CMat, v: &CVec) -> f64 {
    (v.adjoint() * q * v)[(0, 0)].re
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn trace_re(q: &CMat) -> f64 {
    q.trace().re
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = h.nrows();
    let mut vecs = CMat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(h: &CMat) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    hermitian_eigen(h).0[0]
}

/// Clips negative eigenvalues to zero. Returns the repaired matrix and the
/// smallest eigenvalue before repair.
pub fn psd_repair(h: &CMat) -> (CMat, f64) {
    let (vals, vecs) = hermitian_eigen(h);
    let min = vals.first().copied().unwrap_or(0.0);
    if min >= 0.0 {
        return ((h + h.adjoint()).scale(0.5), min);
    }
    let n = h.nrows();
    let mut out = CMat::zeros(n, n);
    for (i, &lam) in vals.iter().enumerate() {
        if lam > 0.0 {
            let u = vecs.column(i).into_owned();
            out += outer(&u).scale(lam);
        }
    }
    (out, min)
}

/// Hermitian square root of a PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(h: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(h);
    let n = h.nrows();
    let mut out = CMat::zeros(n, n);
    for (i, &lam) in vals.iter().enumerate() {
        if lam > 0.0 {
            let u = vecs.column(i).into_owned();
            out += outer(&u).scale(lam.sqrt());
        }
    }
    out
}

/// Lower Cholesky factor of a Hermitian matrix, `None` unless every pivot is
/// positive. nalgebra's complex Cholesky takes complex square roots of
/// negative pivots, so it cannot serve as a definiteness test.
pub fn hermitian_cholesky(h: &CMat) -> Option<CMat> {
    let n = h.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = h[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Inverse and `log det` of a Hermitian positive definite matrix.
pub fn hermitian_pd_inverse_logdet(h: &CMat) -> Option<(CMat, f64)> {
    let l = hermitian_cholesky(h)?;
    let n = h.nrows();
    let logdet = 2.0 * (0..n).map(|i| l[(i, i)].re.ln()).sum::<f64>();
    // Y = L^-1 by forward substitution; H^-1 = Y^H Y
    let mut y = CMat::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { ONE } else { ZERO };
            for k in c..i {
                s -= l[(i, k)] * y[(k, c)];
            }
            y[(i, c)] = s / l[(i, i)];
        }
    }
    Some((y.adjoint() * y, logdet))
}

/// `log det H` for Hermitian positive definite `H`, `None` otherwise.
pub fn hermitian_logdet(h: &CMat) -> Option<f64> {
    let l = hermitian_cholesky(h)?;
    Some(2.0 * (0..h.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> CVec {
    CVec::from_fn(n, |_, _| complex_gaussian(rng, variance))
}

/// Max absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Real column vector as `DVector<f64>`.
pub fn rvec(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

pub fn rmat_zeros(r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::zeros(r, c)
}
