//! Dense generalized symmetric eigenproblems for the bounded-domain pencil
//! (S, M), kernel extraction with a spectral-gap guard, subspace angles,
//! and a scan for discrete Garding constants.

use super::banded::SymBanded;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Expand a real symmetric band to dense.
pub fn to_dense(a: &SymBanded<f64>) -> DMatrix<f64> {
    let n = a.n;
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..(j + a.kw + 1).min(n) {
            let v = a.get(i, j);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Solve S v = lambda M v with M symmetric positive definite. Returns
/// eigenvalues ascending with M-orthonormal eigenvectors as columns.
pub fn generalized_eig(s: &SymBanded<f64>, m: &SymBanded<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = s.n;
    if m.n != n {
        return Err(Error::invalid("pencil matrices differ in size"));
    }
    let sd = to_dense(s);
    let md = to_dense(m);
    let chol = md
        .cholesky()
        .ok_or_else(|| Error::singular("mass matrix is not positive definite"))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::singular("mass Cholesky factor is singular"))?;
    let c = &linv * sd * linv.transpose();
    // symmetrize against rounding
    let c = (&c + c.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let w = eig.eigenvectors.column(i);
        let v = linv.transpose() * w;
        vecs.set_column(col, &v);
    }
    Ok((vals, vecs))
}

/// Identify the kernel block among ascending eigenvalues: the first `q`
/// values must sit at least `gap_ratio` below value q+1. With
/// `expected` given, q is checked against it; otherwise the largest
/// relative jump below `scale_tol * lambda_max` decides.
pub fn kernel_split(
    vals: &[f64],
    expected: Option<usize>,
    gap_ratio: f64,
) -> Result<usize> {
    if vals.len() < 2 {
        return Err(Error::invalid("too few eigenvalues to split"));
    }
    let lmax = vals.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    if lmax == 0.0 {
        return Err(Error::invalid("all eigenvalues vanish"));
    }
    let q = match expected {
        Some(q) => q,
        None => vals
            .iter()
            .position(|&v| v.abs() > 1e-8 * lmax)
            .unwrap_or(vals.len()),
    };
    if q == 0 || q >= vals.len() {
        return Err(Error::invalid(format!("kernel dimension {q} out of range")));
    }
    let near = vals[q - 1].abs();
    let next = vals[q].abs();
    if near * gap_ratio > next {
        return Err(Error::solver(format!(
            "kernel not separated: |lambda_{q}| = {near:.3e} vs |lambda_{}| = {next:.3e}",
            q + 1
        )));
    }
    Ok(q)
}

/// Largest principal angle (radians) between the column spans of a and b
/// in the inner product induced by symmetric positive definite `m_dense`.
/// Computed through the sine (M-orthogonal complement residual), which
/// stays accurate for angles near zero where acos of a singular value
/// saturates at sqrt(machine epsilon).
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>, m_dense: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::invalid("subspaces have different dimensions"));
    }
    let qa = m_orthonormalize(a, m_dense)?;
    let qb = m_orthonormalize(b, m_dense)?;
    // residual of projecting Q_a onto span(Q_b): R = Q_a - Q_b (Q_b^T M Q_a)
    let r = &qa - &qb * (qb.transpose() * m_dense * &qa);
    let gram = r.transpose() * m_dense * r;
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let s2 = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max).max(0.0);
    Ok(s2.sqrt().clamp(0.0, 1.0).asin())
}

fn m_orthonormalize(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = a.transpose() * m * a;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::singular("subspace basis is rank-deficient"))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::singular("Gram factor is singular"))?;
    Ok(a * linv.transpose())
}

/// M-orthogonal projector data onto the kernel span: columns are an
/// M-orthonormal basis Z, so P c = Z Z^T M c.
#[derive(Clone, Debug)]
pub struct KernelProjector {
    pub basis: DMatrix<f64>,
    pub m_dense: DMatrix<f64>,
}

impl KernelProjector {
    pub fn apply_real(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * (&self.m_dense * c))
    }

    pub fn apply_complex(&self, c: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
        let n = c.len();
        let re = DVector::from_iterator(n, c.iter().map(|z| z.re));
        let im = DVector::from_iterator(n, c.iter().map(|z| z.im));
        let pre = self.apply_real(&re);
        let pim = self.apply_real(&im);
        (0..n)
            .map(|i| num_complex::Complex64::new(pre[i], pim[i]))
            .collect()
    }
}

/// Discrete Garding constants: smallest (by the cost 2 k1 + k2) pair with
/// ||u||_{H^p}^2 <= k1 * s_p(u, u) + k2 * ||u||^2 on the whole space, where
/// s_p is the unweighted principal Gram and the H^p norm sums the
/// derivative Grams of orders 0..=p. k2 walks a power-of-two grid; k1 is
/// bisected to the feasibility boundary at each k2.
pub struct GardingConstants {
    pub k1: f64,
    pub k2: f64,
    /// smallest eigenvalue of k1 S_p + k2 M - H at the selected pair
    pub margin: f64,
}

pub fn garding_scan(
    grams: &[SymBanded<f64>], // derivative Grams, order 0..=p, unit weight
) -> Result<GardingConstants> {
    let p = grams.len() - 1;
    if p == 0 {
        return Err(Error::invalid("need at least first-order Grams"));
    }
    let n = grams[0].n;
    let dense: Vec<DMatrix<f64>> = grams.iter().map(to_dense).collect();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for g in &dense {
        h += g;
    }
    let sp = dense[p].clone();
    let mass = dense[0].clone();
    let scale = h.norm();

    let feasible = |k1: f64, k2: f64| -> f64 {
        let a = &sp * k1 + &mass * k2 - &h;
        let a = (&a + a.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(a);
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };

    let mut bestc = f64::INFINITY;
    let mut best: Option<GardingConstants> = None;
    for j in 0..=12 {
        let k2 = 2.0f64.powi(j);
        // bisect the smallest feasible k1 in [0, hi]
        let mut hi = 1.0;
        let mut guard = 0;
        while feasible(hi, k2) < -1e-10 * scale {
            hi *= 2.0;
            guard += 1;
            if guard > 60 {
                return Err(Error::solver("Garding scan: no feasible k1"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid, k2) >= -1e-10 * scale {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let k1 = hi;
        let cost = 2.0 * k1 + k2;
        if cost < bestc {
            bestc = cost;
            best = Some(GardingConstants {
                k1,
                k2,
                margin: feasible(k1, k2),
            });
        }
    }
    best.ok_or_else(|| Error::solver("Garding scan found no candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::space::SplineSpace;

    #[test]
    fn laplacian_eigenvalues_on_the_interval() {
        // Neumann second-derivative pencil on [0, pi]: eigenvalues k^2
        let space = SplineSpace::on_uniform_mesh(0.0, std::f64::consts::PI, 64, 1, &[]).unwrap();
        let (s, m) = space.assemble(&|_| 1.0, 4).unwrap();
        let (vals, vecs) = generalized_eig(&s, &m).unwrap();
        assert!(vals[0].abs() < 1e-10);
        assert!((vals[1] - 1.0).abs() < 1e-6, "lambda_2 = {}", vals[1]);
        assert!((vals[2] - 4.0).abs() < 1e-4, "lambda_3 = {}", vals[2]);
        // M-orthonormality of returned vectors
        let md = to_dense(&m);
        let gram = vecs.columns(0, 3).transpose() * &md * vecs.columns(0, 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kernel_of_the_fourth_order_form_is_affine() {
        let space = SplineSpace::on_uniform_mesh(0.0, 1.0, 24, 2, &[0.5]).unwrap();
        let g = |x: f64| if x < 0.5 { 1.0 } else { 4.0 };
        let (s, m) = space.assemble(&g, 5).unwrap();
        let (vals, vecs) = generalized_eig(&s, &m).unwrap();
        let q = kernel_split(&vals, Some(2), 10.0).unwrap();
        assert_eq!(q, 2);
        assert!(vals[1].abs() < 1e-8 * vals[2].abs());
        // kernel span equals {1, x}
        let n = space.dofs();
        let interp = |f: &dyn Fn(f64) -> f64| -> DVector<f64> {
            DVector::from_vec(space.interpolate_greville(f).unwrap())
        };
        let mut poly = DMatrix::<f64>::zeros(n, 2);
        poly.set_column(0, &interp(&|_| 1.0));
        poly.set_column(1, &interp(&|x| x));
        let md = to_dense(&m);
        let kernel = DMatrix::from(vecs.columns(0, 2));
        let angle = subspace_angle(&kernel, &poly, &md).unwrap();
        assert!(angle < 1e-8, "kernel angle {angle:.3e}");
    }

    #[test]
    fn garding_constants_for_the_gradient_are_unit() {
        // H^1 norm = S_1 + M exactly, so (k1, k2) = (1, 1) is on the boundary
        let space = SplineSpace::on_uniform_mesh(0.0, 1.0, 12, 1, &[]).unwrap();
        let g0 = space.weighted_gram(0, &|_| 1.0, 4).unwrap();
        let g1 = space.weighted_gram(1, &|_| 1.0, 4).unwrap();
        let gc = garding_scan(&[g0, g1]).unwrap();
        assert!((gc.k1 - 1.0).abs() < 1e-6, "k1 = {}", gc.k1);
        assert!((gc.k2 - 1.0).abs() < 1e-9, "k2 = {}", gc.k2);
    }

    #[test]
    fn garding_constants_control_the_h2_norm() {
        let space = SplineSpace::on_uniform_mesh(0.0, 1.0, 12, 2, &[]).unwrap();
        let grams: Vec<SymBanded<f64>> = (0..=2)
            .map(|s| space.weighted_gram(s, &|_| 1.0, 5).unwrap())
            .collect();
        let gc = garding_scan(&grams).unwrap();
        // sanity on 200 random vectors: ||u||_{H^2}^2 <= k1 |u''|^2 + k2 ||u||^2
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let dense: Vec<DMatrix<f64>> = grams.iter().map(to_dense).collect();
        let n = space.dofs();
        for _ in 0..200 {
            let v = DVector::from_iterator(n, (0..n).map(|_| rng.random::<f64>() - 0.5));
            let h: f64 = dense.iter().map(|g| (v.transpose() * g * &v)[(0, 0)]).sum();
            let rhs = gc.k1 * (v.transpose() * &dense[2] * &v)[(0, 0)]
                + gc.k2 * (v.transpose() * &dense[0] * &v)[(0, 0)];
            assert!(h <= rhs * (1.0 + 1e-8) + 1e-9, "h = {h}, bound = {rhs}");
        }
    }
}
