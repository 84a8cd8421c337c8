//! Constant-coefficient differential symbols and spectral shift weights.
//!
//! A symbol represents an operator b(D) = sum over |alpha| = p of
//! b_alpha D^alpha, with D = -i * grad and constant m x n complex blocks
//! b_alpha, m >= n. Applied to the plane wave exp(i<xi, x>) it multiplies by
//! the matrix b(xi) = sum b_alpha xi^alpha, which is what every routine here
//! evaluates. Ellipticity of the family is the two-sided bound
//! alpha0 * I <= b(theta)^H b(theta) <= alpha1 * I over unit directions theta.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMat};
use num_complex::Complex64;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SPHERE_DENSITY: usize = 4096;
pub const DEFAULT_RANK_TRIALS: usize = 64;
/// Relative singular-value floor below which a direction counts as rank-deficient.
pub const ELLIPTICITY_RANK_TOL: f64 = 1e-8;
/// Threshold on the minimized sigma_min(b(xi))/|xi|^p in the complex rank probe.
pub const COMPLEX_RANK_TOL: f64 = 1e-6;

/// Exponent vector of one derivative monomial D^alpha.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// xi^alpha for a real vector.
    pub fn pow_real(&self, xi: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(xi)
            .map(|(&a, &x)| x.powi(a as i32))
            .product()
    }

    /// xi^alpha for a complex vector.
    pub fn pow_complex(&self, xi: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for (&a, &x) in self.0.iter().zip(xi) {
            for _ in 0..a {
                acc *= x;
            }
        }
        acc
    }
}

/// All multi-indices in `d` variables with |alpha| = `p`, lexicographic.
pub fn multi_indices(d: usize, p: usize) -> Vec<MultiIndex> {
    fn rec(d: usize, p: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if d == 1 {
            prefix.push(p);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for k in (0..=p).rev() {
            prefix.push(k);
            rec(d - 1, p - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, p, &mut Vec::new(), &mut out);
    out
}

/// All multi-indices in `d` variables with |beta| <= `p`, orders ascending.
pub fn multi_indices_up_to(d: usize, p: usize) -> Vec<MultiIndex> {
    (0..=p).flat_map(|s| multi_indices(d, s)).collect()
}

#[derive(Clone, Debug)]
pub struct Symbol {
    pub d: usize,
    pub p: usize,
    pub m: usize,
    pub n: usize,
    /// Homogeneous terms (alpha, b_alpha), sorted lexicographically by alpha.
    pub terms: Vec<(MultiIndex, CMat)>,
}

#[derive(Clone, Copy, Debug)]
pub struct Ellipticity {
    pub alpha0: f64,
    pub alpha1: f64,
    pub rank_ok: bool,
}

impl Symbol {
    pub fn new(d: usize, p: usize, terms: Vec<(MultiIndex, CMat)>) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::invalid("symbol needs d >= 1 and p >= 1"));
        }
        let first = terms
            .first()
            .ok_or_else(|| Error::invalid("symbol needs at least one term"))?;
        let (m, n) = (first.1.nrows(), first.1.ncols());
        if m < n || n == 0 {
            return Err(Error::invalid(format!(
                "symbol blocks must be m x n with m >= n >= 1, got {m} x {n}"
            )));
        }
        let mut terms = terms;
        for (alpha, b) in &terms {
            if alpha.dim() != d {
                return Err(Error::invalid("multi-index dimension mismatch"));
            }
            if alpha.order() != p {
                return Err(Error::invalid(format!(
                    "term {:?} has order {} but symbol order is {p}",
                    alpha.0,
                    alpha.order()
                )));
            }
            if b.nrows() != m || b.ncols() != n {
                return Err(Error::invalid("inconsistent block shapes across terms"));
            }
        }
        terms.sort_by(|a, b| a.0 .0.cmp(&b.0 .0));
        for w in terms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!(
                    "duplicate multi-index {:?}",
                    w[0].0 .0
                )));
            }
        }
        Ok(Symbol { d, p, m, n, terms })
    }

    /// b(D) = D^p in one variable, scalar blocks.
    pub fn power_1d(p: usize) -> Symbol {
        let b = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        Symbol::new(1, p, vec![(MultiIndex(vec![p]), b)]).unwrap()
    }

    /// b(D) = D (the gradient), so b(xi) = xi as a d x 1 column.
    pub fn gradient(d: usize) -> Symbol {
        let terms = (0..d)
            .map(|j| {
                let mut e = vec![0usize; d];
                e[j] = 1;
                let mut b = CMat::zeros(d, 1);
                b[(j, 0)] = Complex64::new(1.0, 0.0);
                (MultiIndex(e), b)
            })
            .collect();
        Symbol::new(d, 1, terms).unwrap()
    }

    pub fn eval_real(&self, xi: &[f64]) -> CMat {
        assert_eq!(xi.len(), self.d);
        let mut acc = CMat::zeros(self.m, self.n);
        for (alpha, b) in &self.terms {
            let w = alpha.pow_real(xi);
            if w != 0.0 {
                acc += b * Complex64::new(w, 0.0);
            }
        }
        acc
    }

    pub fn eval_complex(&self, xi: &[Complex64]) -> CMat {
        assert_eq!(xi.len(), self.d);
        let mut acc = CMat::zeros(self.m, self.n);
        for (alpha, b) in &self.terms {
            acc += b * alpha.pow_complex(xi);
        }
        acc
    }

    /// Two-sided ellipticity constants and a rank flag, from deterministic
    /// quasi-uniform direction sampling: {-1, +1} for d = 1, golden-angle
    /// points on the circle for d = 2, a Fibonacci sphere for d = 3.
    pub fn ellipticity(&self, density: usize) -> Result<Ellipticity> {
        let dirs = unit_directions(self.d, density)?;
        let mut alpha0 = f64::INFINITY;
        let mut alpha1 = 0.0f64;
        let mut rank_ok = true;
        for th in &dirs {
            let b = self.eval_real(th);
            let gram = b.adjoint() * &b;
            let ev = hermitian_eigenvalues(&gram);
            let lo = ev[0].max(0.0);
            let hi = ev[ev.len() - 1].max(0.0);
            alpha0 = alpha0.min(lo);
            alpha1 = alpha1.max(hi);
            if lo.sqrt() <= ELLIPTICITY_RANK_TOL * hi.sqrt() {
                rank_ok = false;
            }
        }
        Ok(Ellipticity {
            alpha0,
            alpha1,
            rank_ok,
        })
    }

    /// Probes whether rank b(xi) = n persists over nonzero *complex* xi.
    ///
    /// Random sampling alone almost surely misses the rank-drop variety, so
    /// each trial runs a seeded compass search minimizing
    /// sigma_min(b(xi)) / |xi|^p (a scale-invariant quantity) from a random
    /// start; the check fails when any trial drives it below
    /// `COMPLEX_RANK_TOL`. A sampling check, not a proof: `true` means no
    /// degeneracy was found with this seed and budget.
    pub fn complex_rank_check(&self, trials: usize, seed: u64) -> bool {
        let mut best = f64::INFINITY;
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut xi = random_unit_complex(self.d, &mut rng);
            let mut val = self.sigma_min_scaled(&xi);
            let mut h = 0.5;
            while h > 1e-13 {
                let mut improved = false;
                for _ in 0..4 {
                    let step: Vec<Complex64> = (0..self.d)
                        .map(|_| {
                            Complex64::new(
                                rng.random::<f64>() * 2.0 - 1.0,
                                rng.random::<f64>() * 2.0 - 1.0,
                            )
                        })
                        .collect();
                    let cand: Vec<Complex64> = xi
                        .iter()
                        .zip(&step)
                        .map(|(&x, &s)| x + h * s)
                        .collect();
                    if let Some(cand) = normalize_complex(&cand) {
                        let v = self.sigma_min_scaled(&cand);
                        if v < val {
                            xi = cand;
                            val = v;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    h *= 0.7;
                }
                if val < 0.1 * COMPLEX_RANK_TOL {
                    break;
                }
            }
            best = best.min(val);
            if best < 0.1 * COMPLEX_RANK_TOL {
                break;
            }
        }
        best > COMPLEX_RANK_TOL
    }

    fn sigma_min_scaled(&self, xi: &[Complex64]) -> f64 {
        let b = self.eval_complex(xi);
        let gram = b.adjoint() * &b;
        let ev = hermitian_eigenvalues(&gram);
        let norm2: f64 = xi.iter().map(|z| z.norm_sqr()).sum();
        ev[0].max(0.0).sqrt() / norm2.sqrt().powi(self.p as i32)
    }
}

fn random_unit_complex(d: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..d)
            .map(|_| {
                Complex64::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                )
            })
            .collect();
        if let Some(u) = normalize_complex(&v) {
            return u;
        }
    }
}

fn normalize_complex(v: &[Complex64]) -> Option<Vec<Complex64>> {
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    Some(v.iter().map(|z| z / norm).collect())
}

/// Deterministic quasi-uniform unit directions used by the ellipticity scan.
pub fn unit_directions(d: usize, density: usize) -> Result<Vec<Vec<f64>>> {
    if density == 0 {
        return Err(Error::invalid("direction density must be positive"));
    }
    match d {
        1 => Ok(vec![vec![1.0], vec![-1.0]]),
        2 => {
            let golden = 0.5 * (5f64.sqrt() - 1.0);
            Ok((0..density)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * ((i as f64 * golden).fract());
                    vec![t.cos(), t.sin()]
                })
                .collect())
        }
        3 => {
            let ga = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..density)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / density as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = ga * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect())
        }
        _ => Err(Error::unsupported(
            "direction sampling implemented for d <= 3",
        )),
    }
}

/// Sector weight: 1/|sin phi| when the shift sits near the positive real
/// axis (phi in (0, pi/2) or (3pi/2, 2pi)), 1 on the left half-plane sector
/// [pi/2, 3pi/2]. Defined for phi strictly inside (0, 2pi).
pub fn c_of_phi(phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 2.0 * std::f64::consts::PI) {
        return Err(Error::invalid(format!(
            "phi = {phi} outside (0, 2pi)"
        )));
    }
    let half = 0.5 * std::f64::consts::PI;
    if (half..=3.0 * half).contains(&phi) {
        Ok(1.0)
    } else {
        Ok(1.0 / phi.sin().abs())
    }
}

/// Resolvent weight relative to a spectral edge `c_flat`: with
/// zeta - c_flat = r e^{i theta}, returns c(theta)^2 / r^2 for r < 1 and
/// c(theta)^2 otherwise. Errors when zeta sits on the cut [c_flat, inf).
pub fn rho_flat(zeta: Complex64, c_flat: f64) -> Result<f64> {
    let w = zeta - Complex64::new(c_flat, 0.0);
    if w.im == 0.0 && w.re >= 0.0 {
        return Err(Error::invalid(
            "zeta lies on the cut [c_flat, inf); rho_flat undefined",
        ));
    }
    let r = w.norm();
    let mut theta = w.im.atan2(w.re);
    if theta <= 0.0 {
        theta += 2.0 * std::f64::consts::PI;
    }
    let c = c_of_phi(theta)?;
    Ok(if r < 1.0 { c * c / (r * r) } else { c * c })
}

/// A resolvent shift zeta off the closed positive real axis, together with
/// its polar angle phi in (0, 2pi) and the cached sector weight c(phi).
#[derive(Clone, Copy, Debug)]
pub struct Shift {
    pub zeta: Complex64,
    pub phi: f64,
    pub c_phi: f64,
}

impl Shift {
    pub fn new(zeta: Complex64) -> Result<Self> {
        if zeta.im == 0.0 && zeta.re >= 0.0 {
            return Err(Error::invalid(
                "shift must avoid the closed positive real axis",
            ));
        }
        let mut phi = zeta.im.atan2(zeta.re);
        if phi <= 0.0 {
            phi += 2.0 * std::f64::consts::PI;
        }
        let c_phi = c_of_phi(phi)?;
        Ok(Shift { zeta, phi, c_phi })
    }

    pub fn abs(&self) -> f64 {
        self.zeta.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;
    use std::f64::consts::PI;

    fn re(x: f64) -> C {
        C::new(x, 0.0)
    }

    #[test]
    fn multi_index_enumeration_is_lexicographic() {
        let idx = multi_indices(2, 2);
        let got: Vec<Vec<usize>> = idx.into_iter().map(|a| a.0).collect();
        assert_eq!(got, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices_up_to(2, 2).len(), 6);
    }

    /// Rows (D1^2, sqrt(2) D1 D2, D2^2): b(theta)^H b(theta) =
    /// theta1^4 + 2 theta1^2 theta2^2 + theta2^4 = 1 on the circle.
    fn hessian_symbol() -> Symbol {
        let s = 2f64.sqrt();
        Symbol::new(
            2,
            2,
            vec![
                (MultiIndex(vec![2, 0]), CMat::from_row_slice(3, 1, &[re(1.), re(0.), re(0.)])),
                (MultiIndex(vec![1, 1]), CMat::from_row_slice(3, 1, &[re(0.), re(s), re(0.)])),
                (MultiIndex(vec![0, 2]), CMat::from_row_slice(3, 1, &[re(0.), re(0.), re(1.)])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn hessian_symbol_is_an_isometry_on_directions() {
        let b = hessian_symbol();
        let ell = b.ellipticity(512).unwrap();
        assert!((ell.alpha0 - 1.0).abs() < 1e-12);
        assert!((ell.alpha1 - 1.0).abs() < 1e-12);
        assert!(ell.rank_ok);
    }

    #[test]
    fn gradient_symbol_ellipticity_and_complex_rank() {
        let b = Symbol::gradient(2);
        let ell = b.ellipticity(DEFAULT_SPHERE_DENSITY).unwrap();
        assert!((ell.alpha0 - 1.0).abs() < 1e-12);
        assert!((ell.alpha1 - 1.0).abs() < 1e-12);
        assert!(ell.rank_ok);
        // |b(xi)| = |xi| for complex xi too, so no complex degeneracy.
        assert!(b.complex_rank_check(DEFAULT_RANK_TRIALS, 7));
    }

    #[test]
    fn cauchy_riemann_symbol_degenerates_over_complex_directions() {
        // b(xi) = xi1 + i xi2 as a 1 x 1 block: fine over real directions,
        // rank drops at xi = (1, i).
        let terms = vec![
            (MultiIndex(vec![1, 0]), CMat::from_element(1, 1, re(1.0))),
            (MultiIndex(vec![0, 1]), CMat::from_element(1, 1, C::new(0.0, 1.0))),
        ];
        let b = Symbol::new(2, 1, terms).unwrap();
        let ell = b.ellipticity(DEFAULT_SPHERE_DENSITY).unwrap();
        assert!(ell.rank_ok, "real directions are nondegenerate");
        assert!(!b.complex_rank_check(DEFAULT_RANK_TRIALS, 7));
        // determinism of the probe
        assert!(!b.complex_rank_check(DEFAULT_RANK_TRIALS, 7));
    }

    #[test]
    fn power_symbol_1d() {
        let b = Symbol::power_1d(2);
        assert_eq!(b.eval_real(&[2.0])[(0, 0)], re(4.0));
        let ell = b.ellipticity(16).unwrap();
        assert!((ell.alpha0 - 1.0).abs() < 1e-12);
        assert!((ell.alpha1 - 1.0).abs() < 1e-12);
        assert!(b.complex_rank_check(8, 1));
    }

    #[test]
    fn homogeneity_of_degree_p() {
        let b = hessian_symbol();
        let xi = [0.3, -1.7];
        let t = 2.5f64;
        let scaled: Vec<f64> = xi.iter().map(|x| t * x).collect();
        let lhs = b.eval_real(&scaled);
        let rhs = b.eval_real(&xi) * re(t.powi(2));
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn sector_weight_values() {
        assert!((c_of_phi(PI / 4.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c_of_phi(PI / 2.0).unwrap(), 1.0);
        assert_eq!(c_of_phi(PI).unwrap(), 1.0);
        assert_eq!(c_of_phi(3.0 * PI / 2.0).unwrap(), 1.0);
        assert!((c_of_phi(7.0 * PI / 4.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(c_of_phi(0.0).is_err());
        assert!(c_of_phi(2.0 * PI).is_err());
        assert!(c_of_phi(-1.0).is_err());
    }

    #[test]
    fn rho_flat_branches() {
        // unit distance at angle pi/2: outside the unit disc rule, c = 1
        assert!((rho_flat(C::new(1.0, 1.0), 1.0).unwrap() - 1.0).abs() < 1e-15);
        // half distance at angle pi/2: 1 / 0.25 = 4
        assert!((rho_flat(C::new(1.0, 0.5), 1.0).unwrap() - 4.0).abs() < 1e-15);
        // real approach from the left: angle pi, c = 1, distance 0.1
        assert!((rho_flat(re(0.9), 1.0).unwrap() - 100.0).abs() < 1e-9);
        // far on the negative axis: c = 1, distance >= 1
        assert!((rho_flat(re(-5.0), 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rho_flat(re(2.0), 1.0).is_err());
        assert!(rho_flat(re(1.0), 1.0).is_err());
    }

    #[test]
    fn shift_polar_data() {
        let s = Shift::new(re(-1.0)).unwrap();
        assert!((s.phi - PI).abs() < 1e-15);
        assert_eq!(s.c_phi, 1.0);
        let s = Shift::new(C::new(0.0, 1.0)).unwrap();
        assert!((s.phi - PI / 2.0).abs() < 1e-15);
        assert_eq!(s.c_phi, 1.0);
        let s = Shift::new(C::new(1.0, 1.0)).unwrap();
        assert!((s.phi - PI / 4.0).abs() < 1e-15);
        assert!((s.c_phi - 2f64.sqrt()).abs() < 1e-15);
        let s = Shift::new(C::new(1.0, -1.0)).unwrap();
        assert!((s.phi - 7.0 * PI / 4.0).abs() < 1e-15);
        assert!((s.c_phi - 2f64.sqrt()).abs() < 1e-15);
        assert!(Shift::new(re(5.0)).is_err());
        assert!(Shift::new(re(0.0)).is_err());
    }
}
