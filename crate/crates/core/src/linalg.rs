//! Small dense complex linear-algebra helpers shared by the channel,
//! estimation and performance modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const J: C64 = C64 { re: 0.0, im: 1.0 };

/// `e^{j theta}`
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_identity(n: usize, s: f64) -> CMat {
    CMat::from_diagonal_element(n, n, C64::new(s, 0.0))
}

/// Unitary DFT matrix, `[F]_{k,n} = e^{-j 2 pi k n / N} / sqrt(N)`.
pub fn dft(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |k, m| {
        let phase = -2.0 * std::f64::consts::PI * ((k * m) % n) as f64 / n as f64;
        cis(phase) * scale
    })
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Real part of `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc.re
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn hermitian_residual(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Principal square root of a Hermitian PSD matrix; eigenvalues below zero
/// (round-off) are clipped.
pub fn psd_sqrt(a: &CMat) -> CMat {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let d = eig
        .eigenvalues
        .map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    v * CMat::from_diagonal(&d) * v.adjoint()
}

/// `a * a^H` for a column vector.
pub fn outer(a: &CVec) -> CMat {
    a * a.adjoint()
}

/// Hermitian symmetrization `(A + A^H)/2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_is_unitary() {
        for n in [1, 2, 5, 8] {
            let f = dft(n);
            assert!(max_abs(&(&f * f.adjoint() - identity(n))) < 1e-12);
        }
    }

    #[test]
    fn trace_product_matches_dense() {
        let a = CMat::from_fn(3, 3, |i, j| C64::new(i as f64 + 1.0, j as f64 - 0.5));
        let b = CMat::from_fn(3, 3, |i, j| C64::new((i * j) as f64, 1.0));
        let dense = (&a * &b).trace();
        assert!((trace_product(&a, &b) - dense.re).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), C64::new(1.0, 0.0)],
        );
        let s = psd_sqrt(&a);
        assert!(max_abs(&(&s * &s - &a)) < 1e-12);
    }
}
