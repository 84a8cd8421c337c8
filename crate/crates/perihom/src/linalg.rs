//! Small dense helpers for complex Hermitian matrices.
//!
//! Everything here operates on matrices of modest size (symbol blocks,
//! coefficient values at a point, effective matrices), so dense nalgebra
//! routines are fine. Complex Hermitian eigenvalues go through the real
//! embedding [[X, -Y], [Y, X]] of H = X + iY, whose spectrum is the spectrum
//! of H with every eigenvalue doubled.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrized
/// first so tiny non-Hermitian noise cannot produce complex eigenvalues.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eigenvalues needs a square matrix");
    let mut emb = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let h = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            emb[(i, j)] = h.re;
            emb[(i + n, j + n)] = h.re;
            emb[(i, j + n)] = -h.im;
            emb[(i + n, j)] = h.im;
        }
    }
    let mut ev: Vec<f64> = emb.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    // collapse the duplicated pairs
    (0..n).map(|i| 0.5 * (ev[2 * i] + ev[2 * i + 1])).collect()
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    let gram = a.adjoint() * a;
    let mut sv: Vec<f64> = hermitian_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    sv.reverse();
    sv
}

pub fn spectral_norm(a: &CMat) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn skew_part(a: &CMat) -> CMat {
    (a - a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Solve a x = b for a small well-conditioned complex matrix.
pub fn solve_small(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

pub fn invert_small(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

/// Max column-sum style check that a matrix is Hermitian to `tol`,
/// relative to its spectral norm.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let s = skew_part(a);
    let scale = spectral_norm(a).max(1e-300);
    spectral_norm(&s) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn eigenvalues_of_pauli_like_matrix() {
        // [[0, -i], [i, 0]] has eigenvalues -1, 1
        let a = CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
        let ev = hermitian_eigenvalues(&a);
        assert!((ev[0] + 1.0).abs() < 1e-12);
        assert!((ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_values_of_rank_one() {
        let a = CMat::from_row_slice(2, 1, &[c(3., 0.), c(4., 0.)]);
        let sv = singular_values(&a);
        assert!((sv[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn solve_small_roundtrip() {
        let a = CMat::from_row_slice(2, 2, &[c(2., 1.), c(0., 0.), c(1., 0.), c(1., -1.)]);
        let x = CMat::from_row_slice(2, 1, &[c(1., 2.), c(-3., 0.5)]);
        let b = &a * &x;
        let y = solve_small(&a, &b).unwrap();
        assert!((&y - &x).norm() < 1e-12);
    }
}
