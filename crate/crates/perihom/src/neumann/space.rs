//! 1-D spline Galerkin spaces for the form integral_O g(x) u^(p) conj(v^(p)).
//!
//! The basis has degree p + 1 with doubled knots at coefficient interfaces:
//! flux continuity makes the exact solution's p-th derivative jump where g
//! jumps, and the reduced-continuity basis reproduces that. Quadrature is
//! element-wise Gauss-Legendre; since interfaces sit on element boundaries,
//! piecewise-smooth coefficients are integrated without crossing a kink.

use super::banded::{BandedMatrix, Dd, SymBanded};
use super::bspline::{BSplineBasis, Spline};
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::sync::Arc;

/// Gauss-Legendre rule on [-1, 1] by the Golub-Welsch eigendecomposition of
/// the Jacobi matrix.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    if q == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut jac = nalgebra::DMatrix::<f64>::zeros(q, q);
    for k in 1..q {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = 2.0 * eig.eigenvectors[(0, i)] * eig.eigenvectors[(0, i)];
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

#[derive(Clone, Debug)]
pub struct SplineSpace {
    pub basis: Arc<BSplineBasis>,
    /// Order of the principal derivative in the form.
    pub p: usize,
}

impl SplineSpace {
    /// Uniform mesh of `elements` cells on [a, b]; every interface in
    /// `interfaces` must land on an interior mesh point (strict check), and
    /// gets a doubled knot.
    pub fn on_uniform_mesh(
        a: f64,
        b: f64,
        elements: usize,
        p: usize,
        interfaces: &[f64],
    ) -> Result<Self> {
        if elements < 2 {
            return Err(Error::invalid("need at least 2 elements"));
        }
        let breaks: Vec<f64> = (0..=elements)
            .map(|i| a + (b - a) * i as f64 / elements as f64)
            .collect();
        let tol = 1e-10 * (b - a);
        for &x in interfaces {
            let on_mesh = breaks[1..elements]
                .iter()
                .any(|&t| (t - x).abs() <= tol);
            if !on_mesh {
                return Err(Error::invalid(format!(
                    "coefficient interface {x} does not lie on an interior mesh point"
                )));
            }
        }
        let basis = BSplineBasis::clamped(&breaks, p + 1, interfaces)?;
        Ok(SplineSpace {
            basis: Arc::new(basis),
            p,
        })
    }

    pub fn dofs(&self) -> usize {
        self.basis.len()
    }

    /// Band half-width of Galerkin matrices on this basis.
    pub fn bandwidth(&self) -> usize {
        self.basis.degree
    }

    pub fn max_element_width(&self) -> f64 {
        self.basis
            .breakpoints()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Gram matrix of the s-th derivative weighted by `coeff`:
    /// integral coeff(x) u^(s) v^(s). Returns the Hermitian lower band.
    pub fn weighted_gram(
        &self,
        s: usize,
        coeff: &dyn Fn(f64) -> f64,
        quad_pts: usize,
    ) -> Result<SymBanded<f64>> {
        let n = self.dofs();
        let kw = self.bandwidth();
        let mut out = SymBanded::<f64>::zeros(n, kw);
        let (nodes, weights) = gauss_legendre(quad_pts);
        let breaks = self.basis.breakpoints();
        for el in breaks.windows(2) {
            let (xl, xr) = (el[0], el[1]);
            let half = 0.5 * (xr - xl);
            let mid = 0.5 * (xr + xl);
            for (qn, qw) in nodes.iter().zip(&weights) {
                let x = mid + half * qn;
                let w = half * qw;
                let c = coeff(x);
                if !c.is_finite() {
                    return Err(Error::invalid("coefficient is not finite at a quadrature node"));
                }
                let (i0, ders) = self.basis.eval_ders(x, s);
                let row = &ders[s];
                for i in 0..row.len() {
                    for j in 0..=i {
                        out.add_lower(i0 + i, i0 + j, w * c * row[i] * row[j]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Stiffness (p-th derivative, coefficient g) and mass matrices.
    pub fn assemble(
        &self,
        coeff: &dyn Fn(f64) -> f64,
        quad_pts: usize,
    ) -> Result<(SymBanded<f64>, SymBanded<f64>)> {
        let s = self.weighted_gram(self.p, coeff, quad_pts)?;
        let m = self.weighted_gram(0, &|_| 1.0, quad_pts)?;
        Ok((s, m))
    }

    /// Load vector (F, phi_i) for complex-valued data.
    pub fn load_vector(
        &self,
        f: &dyn Fn(f64) -> Complex64,
        quad_pts: usize,
    ) -> Vec<Complex64> {
        let n = self.dofs();
        let mut out = vec![Complex64::default(); n];
        let (nodes, weights) = gauss_legendre(quad_pts);
        for el in self.basis.breakpoints().windows(2) {
            let (xl, xr) = (el[0], el[1]);
            let half = 0.5 * (xr - xl);
            let mid = 0.5 * (xr + xl);
            for (qn, qw) in nodes.iter().zip(&weights) {
                let x = mid + half * qn;
                let w = half * qw;
                let fv = f(x);
                let (i0, vals) = self.basis.eval_all(x);
                for (r, &v) in vals.iter().enumerate() {
                    out[i0 + r] += fv * (w * v);
                }
            }
        }
        out
    }

    /// Spline from a complex coefficient vector.
    pub fn spline(&self, coeffs: Vec<Complex64>) -> Result<Spline<Complex64>> {
        Spline::new(self.basis.clone(), coeffs)
    }

    /// Coefficients interpolating f at the Greville abscissae, the standard
    /// collocation points where the B-spline collocation matrix is
    /// nonsingular.
    pub fn interpolate_greville(&self, f: &dyn Fn(f64) -> f64) -> Result<Vec<f64>> {
        let n = self.dofs();
        let basis = &self.basis;
        let deg = basis.degree;
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut rhs = nalgebra::DVector::<f64>::zeros(n);
        for row in 0..n {
            let x = basis.knots[row + 1..row + 1 + deg].iter().sum::<f64>() / deg as f64;
            let (i0, vals) = basis.eval_all(x);
            for (r, &v) in vals.iter().enumerate() {
                a[(row, i0 + r)] = v;
            }
            rhs[row] = f(x);
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::singular("Greville collocation matrix is singular"))?;
        Ok(sol.iter().cloned().collect())
    }
}

/// Compensated residual r = load - (S - zeta M) u. Higher-order stiffness
/// matrices are too ill-conditioned for the cancellation to survive plain
/// f64, so every row is accumulated in double-double.
fn residual_shifted(
    s: &SymBanded<f64>,
    m: &SymBanded<f64>,
    zeta: Complex64,
    u: &[Complex64],
    load: &[Complex64],
) -> Vec<Complex64> {
    let n = s.n;
    let kw = s.kw.max(m.kw);
    let mut out = vec![Complex64::default(); n];
    for i in 0..n {
        let mut re = Dd::default();
        let mut im = Dd::default();
        let mut mre = Dd::default();
        let mut mim = Dd::default();
        re.add(load[i].re);
        im.add(load[i].im);
        let lo = i.saturating_sub(kw);
        let hi = (i + kw + 1).min(n);
        for j in lo..hi {
            let sv = s.get(i, j);
            let mv = m.get(i, j);
            re.add_prod(-sv, u[j].re);
            im.add_prod(-sv, u[j].im);
            mre.add_prod(mv, u[j].re);
            mim.add_prod(mv, u[j].im);
        }
        // + zeta * (M u): fold the double-double mass products in exactly
        re.add_prod(zeta.re, mre.hi());
        re.add(zeta.re * mre.lo());
        re.add_prod(-zeta.im, mim.hi());
        re.add(-zeta.im * mim.lo());
        im.add_prod(zeta.im, mre.hi());
        im.add(zeta.im * mre.lo());
        im.add_prod(zeta.re, mim.hi());
        im.add(zeta.re * mim.lo());
        out[i] = Complex64::new(re.value(), im.value());
    }
    out
}

/// Solve (S - zeta M) u = M f_load for the Galerkin resolvent, where
/// `f_load` is already a load vector (integrals of F against the basis).
/// The banded LU is polished by iterative refinement with compensated
/// residuals, which keeps fourth-order pencils at working accuracy.
pub fn solve_shifted(
    s: &SymBanded<f64>,
    m: &SymBanded<f64>,
    zeta: Complex64,
    f_load: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = s.n;
    if m.n != n || f_load.len() != n {
        return Err(Error::invalid("pencil and load sizes disagree"));
    }
    let kw = s.kw.max(m.kw);
    let mut a = BandedMatrix::<Complex64>::zeros(n, kw, kw);
    for j in 0..n {
        for i in j..(j + kw + 1).min(n) {
            // S and M are real symmetric, so S - zeta M is complex symmetric
            let v = Complex64::new(s.get(i, j), 0.0) - zeta * m.get(i, j);
            if v != Complex64::default() {
                a.set(i, j, v);
                if i != j {
                    a.set(j, i, v);
                }
            }
        }
    }
    let lu = a.lu()?;
    let mut u = lu.solve(f_load);
    for _ in 0..3 {
        let r = residual_shifted(s, m, zeta, &u, f_load);
        let d = lu.solve(&r);
        let dn: f64 = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let un: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (ui, di) in u.iter_mut().zip(&d) {
            *ui += di;
        }
        if dn <= 1e-15 * un {
            break;
        }
    }
    Ok(u)
}

/// Apply the mass matrix to a complex vector (real symmetric band).
pub fn mass_apply(m: &SymBanded<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let n = m.n;
    assert_eq!(x.len(), n);
    let mut y = vec![Complex64::default(); n];
    for j in 0..n {
        let hi = (j + m.kw).min(n - 1);
        y[j] += m.get(j, j) * x[j];
        for i in j + 1..=hi {
            let v = m.get(i, j);
            if v != 0.0 {
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
        }
    }
    y
}
