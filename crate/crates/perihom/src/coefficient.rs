//! Coefficient families for the oscillating matrix g.
//!
//! Coefficients are defined by a small closed-form vocabulary so that every
//! problem is reproducible from its config: constants, Hermitian
//! trigonometric polynomials, reciprocal trigonometric scalars, axis-aligned
//! two-phase mixtures, and seeded random Gram-form polynomials. An
//! expression can be sampled on the torus grid (spectral work) and evaluated
//! at arbitrary points (bounded-domain quadrature), including in rescaled
//! form g(x / eps).

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::lattice::Lattice;
use crate::linalg::{self, CMat};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub enum GExpr {
    /// Constant Hermitian matrix.
    Constant { value: CMat },
    /// mean + sum_k (C_k e^{i<kappa_k, x>} + C_k^H e^{-i<kappa_k, x>}),
    /// kappa_k = 2 pi k_j / L_j. Hermitian by construction.
    TrigPoly {
        mean: CMat,
        harmonics: Vec<(Vec<i64>, CMat)>,
    },
    /// Scalar (m = 1) reciprocal of a positive real trigonometric polynomial
    /// t(x) = mean + 2 Re sum_k c_k e^{i<kappa_k, x>}.
    InvTrigScalar {
        mean: f64,
        harmonics: Vec<(Vec<i64>, Complex64)>,
    },
    /// `first` where the fractional coordinate along `axis` lies in
    /// [0, split), `second` on [split, 1).
    TwoPhase {
        axis: usize,
        split: f64,
        first: CMat,
        second: CMat,
    },
    /// offset * I + scale * A(x)^H A(x) with A a (generally non-Hermitian)
    /// trigonometric polynomial; positive definite whenever offset > 0.
    Gram {
        offset: f64,
        scale: f64,
        factor_mean: CMat,
        factor_harmonics: Vec<(Vec<i64>, CMat)>,
    },
}

fn trig_sum(
    mean: &CMat,
    harmonics: &[(Vec<i64>, CMat)],
    lattice: &Lattice,
    x: &[f64],
    hermitian: bool,
) -> CMat {
    let mut acc = mean.clone();
    for (k, c) in harmonics {
        let mut phase = 0.0;
        for (a, &kj) in k.iter().enumerate() {
            phase += 2.0 * std::f64::consts::PI * kj as f64 * x[a] / lattice.lengths()[a];
        }
        let e = Complex64::new(0.0, phase).exp();
        acc += c * e;
        if hermitian {
            acc += c.adjoint() * e.conj();
        }
    }
    acc
}

impl GExpr {
    pub fn size(&self) -> usize {
        match self {
            GExpr::Constant { value } => value.nrows(),
            GExpr::TrigPoly { mean, .. } => mean.nrows(),
            GExpr::InvTrigScalar { .. } => 1,
            GExpr::TwoPhase { first, .. } => first.nrows(),
            GExpr::Gram { factor_mean, .. } => factor_mean.nrows(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let square = |m: &CMat| -> Result<()> {
            if m.nrows() != m.ncols() || m.nrows() == 0 {
                return Err(Error::invalid("coefficient matrices must be square"));
            }
            Ok(())
        };
        let modes_ok = |h: &[(Vec<i64>, CMat)]| -> Result<()> {
            for (k, c) in h {
                if k.len() != d {
                    return Err(Error::invalid("harmonic mode dimension mismatch"));
                }
                square(c)?;
                if c.nrows() != self.size() {
                    return Err(Error::invalid("harmonic block size mismatch"));
                }
            }
            Ok(())
        };
        match self {
            GExpr::Constant { value } => square(value),
            GExpr::TrigPoly { mean, harmonics } => {
                square(mean)?;
                modes_ok(harmonics)
            }
            GExpr::InvTrigScalar { mean, harmonics } => {
                let amp: f64 = harmonics.iter().map(|(_, c)| 2.0 * c.norm()).sum();
                if *mean - amp <= 0.0 {
                    return Err(Error::invalid(
                        "reciprocal trigonometric coefficient may touch zero",
                    ));
                }
                if harmonics.iter().any(|(k, _)| k.len() != d) {
                    return Err(Error::invalid("harmonic mode dimension mismatch"));
                }
                Ok(())
            }
            GExpr::TwoPhase {
                axis,
                split,
                first,
                second,
            } => {
                square(first)?;
                square(second)?;
                if first.nrows() != second.nrows() {
                    return Err(Error::invalid("two-phase blocks differ in size"));
                }
                if *axis >= d {
                    return Err(Error::invalid("two-phase axis out of range"));
                }
                if !(*split > 0.0 && *split < 1.0) {
                    return Err(Error::invalid("two-phase split must lie in (0,1)"));
                }
                Ok(())
            }
            GExpr::Gram {
                offset,
                scale,
                factor_mean,
                factor_harmonics,
            } => {
                square(factor_mean)?;
                modes_ok(factor_harmonics)?;
                if *offset <= 0.0 || *scale < 0.0 {
                    return Err(Error::invalid("Gram coefficient needs offset > 0, scale >= 0"));
                }
                Ok(())
            }
        }
    }

    /// Value of g at a point of the periodicity cell (coordinates are taken
    /// modulo the cell).
    pub fn eval(&self, lattice: &Lattice, x: &[f64]) -> CMat {
        match self {
            GExpr::Constant { value } => value.clone(),
            GExpr::TrigPoly { mean, harmonics } => trig_sum(mean, harmonics, lattice, x, true),
            GExpr::InvTrigScalar { mean, harmonics } => {
                let mut t = *mean;
                for (k, c) in harmonics {
                    let mut phase = 0.0;
                    for (a, &kj) in k.iter().enumerate() {
                        phase +=
                            2.0 * std::f64::consts::PI * kj as f64 * x[a] / lattice.lengths()[a];
                    }
                    t += 2.0 * (c * Complex64::new(0.0, phase).exp()).re;
                }
                CMat::from_element(1, 1, Complex64::new(1.0 / t, 0.0))
            }
            GExpr::TwoPhase {
                axis,
                split,
                first,
                second,
            } => {
                let frac = (x[*axis] / lattice.lengths()[*axis]).rem_euclid(1.0);
                if frac < *split {
                    first.clone()
                } else {
                    second.clone()
                }
            }
            GExpr::Gram {
                offset,
                scale,
                factor_mean,
                factor_harmonics,
            } => {
                let a = trig_sum(factor_mean, factor_harmonics, lattice, x, false);
                let m = factor_mean.nrows();
                CMat::identity(m, m) * Complex64::new(*offset, 0.0)
                    + a.adjoint() * a * Complex64::new(*scale, 0.0)
            }
        }
    }

    /// Value of the rescaled coefficient g(x / eps).
    pub fn eval_scaled(&self, lattice: &Lattice, x: &[f64], eps: f64) -> CMat {
        let y: Vec<f64> = x.iter().map(|&v| v / eps).collect();
        self.eval(lattice, &y)
    }
}

/// Seeded random Gram-form coefficient with eigenvalues in roughly
/// [1, contrast]: g = I + s A(x)^H A(x), the scale s calibrated on a probe
/// grid. Deterministic in the seed. `real` restricts A to a real cosine
/// polynomial, so g is real symmetric.
pub fn random_gram_expr(
    m: usize,
    d: usize,
    band: i64,
    contrast: f64,
    seed: u64,
    real: bool,
    lattice: &Lattice,
) -> Result<GExpr> {
    if m == 0 || band < 0 || contrast <= 1.0 {
        return Err(Error::invalid("random coefficient needs m >= 1, band >= 0, contrast > 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Complex64 {
        let re = 2.0 * rng.random::<f64>() - 1.0;
        let im = if real { 0.0 } else { 2.0 * rng.random::<f64>() - 1.0 };
        Complex64::new(re, im)
    };
    let factor_mean = CMat::from_fn(m, m, |_, _| draw(&mut rng));
    // one harmonic per mode in the half-space band (conjugates implicit in
    // the Gram product)
    let mut modes: Vec<Vec<i64>> = Vec::new();
    let mut cursor = vec![-band; d];
    loop {
        if cursor.iter().any(|&k| k != 0) {
            // keep one representative per +-k pair
            if cursor.iter().find(|&&k| k != 0).copied().unwrap_or(0) > 0 {
                modes.push(cursor.clone());
            }
        }
        let mut a = d;
        loop {
            if a == 0 {
                break;
            }
            a -= 1;
            cursor[a] += 1;
            if cursor[a] <= band {
                break;
            }
            cursor[a] = -band;
        }
        if cursor.iter().all(|&k| k == -band) {
            break;
        }
    }
    let factor_harmonics: Vec<(Vec<i64>, CMat)> = modes
        .into_iter()
        .flat_map(|k| {
            let c = CMat::from_fn(m, m, |_, _| draw(&mut rng)) * Complex64::new(0.5, 0.0);
            if real {
                // pair +-k with equal real blocks so A(x) is a cosine sum and
                // g stays real symmetric
                let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                vec![(neg, c.clone()), (k, c)]
            } else {
                vec![(k, c)]
            }
        })
        .collect();
    // calibrate the scale so sup_x lambda_max(A^H A) maps to contrast - 1
    let probe = GExpr::Gram {
        offset: 0.0 + 1e-300,
        scale: 1.0,
        factor_mean: factor_mean.clone(),
        factor_harmonics: factor_harmonics.clone(),
    };
    let samples = 33usize;
    let mut sup = 0.0f64;
    let mut x = vec![0.0; d];
    let total = samples.pow(d as u32);
    for t in 0..total {
        let mut rest = t;
        for a in 0..d {
            x[a] = (rest % samples) as f64 / samples as f64 * lattice.lengths()[a];
            rest /= samples;
        }
        let v = probe.eval(lattice, &x);
        sup = sup.max(linalg::spectral_norm(&v));
    }
    if sup <= 0.0 {
        return Err(Error::invalid("degenerate random factor"));
    }
    Ok(GExpr::Gram {
        offset: 1.0,
        scale: (contrast - 1.0) / sup,
        factor_mean,
        factor_harmonics,
    })
}

/// A validated Hermitian positive-definite coefficient: closed form plus
/// nodal samples on the cell grid, pointwise inverse, and the measured sup
/// norms of g and g^{-1}.
#[derive(Clone, Debug)]
pub struct CoefficientG {
    pub expr: Option<GExpr>,
    pub lattice: Lattice,
    pub field: PeriodicField,
    pub inv_field: PeriodicField,
    pub g_inf: f64,
    pub ginv_inf: f64,
    pub min_eig: f64,
}

impl CoefficientG {
    pub fn from_expr(expr: GExpr, lattice: Lattice, dims: &[usize]) -> Result<Self> {
        expr.validate(lattice.dim())?;
        let m = expr.size();
        let field = PeriodicField::from_fn(lattice.clone(), m, m, dims, |x| {
            expr.eval(&lattice, x)
        })?;
        Self::build(Some(expr), lattice, field)
    }

    pub fn from_field(field: PeriodicField) -> Result<Self> {
        if field.rows != field.cols {
            return Err(Error::invalid("coefficient field must be square"));
        }
        let lattice = field.lattice.clone();
        Self::build(None, lattice, field)
    }

    fn build(expr: Option<GExpr>, lattice: Lattice, field: PeriodicField) -> Result<Self> {
        let m = field.rows;
        let n = field.spatial_len();
        let mut inv_values = vec![Complex64::default(); m * m * n];
        let mut g_inf = 0.0f64;
        let mut ginv_inf = 0.0f64;
        let mut min_eig = f64::INFINITY;
        for t in 0..n {
            let v = field.value_matrix(t);
            let defect = linalg::hermitian_defect(&v);
            if defect > HERMITIAN_TOL * (1.0 + linalg::spectral_norm(&v)) {
                return Err(Error::invalid(format!(
                    "coefficient is not Hermitian at a node (defect {defect:.3e})"
                )));
            }
            let h = linalg::hermitian_part(&v);
            let eigs = linalg::hermitian_eigenvalues(&h);
            let lo = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo <= 0.0 {
                return Err(Error::invalid(format!(
                    "coefficient is not positive definite at a node (min eig {lo:.3e})"
                )));
            }
            min_eig = min_eig.min(lo);
            g_inf = g_inf.max(hi);
            ginv_inf = ginv_inf.max(1.0 / lo);
            let inv = linalg::invert_small(&h)
                .ok_or_else(|| Error::singular("coefficient not invertible at a node"))?;
            for r in 0..m {
                for c in 0..m {
                    inv_values[(r * m + c) * n + t] = inv[(r, c)];
                }
            }
        }
        let dims = field.dims.clone();
        let inv_field = PeriodicField::from_values(lattice.clone(), m, m, &dims, inv_values)?;
        Ok(CoefficientG {
            expr,
            lattice,
            field,
            inv_field,
            g_inf,
            ginv_inf,
            min_eig,
        })
    }

    pub fn size(&self) -> usize {
        self.field.rows
    }

    /// Arithmetic mean of g over the cell.
    pub fn g_bar(&self) -> CMat {
        self.field.mean()
    }

    /// Harmonic-type mean (mean of g^{-1})^{-1}.
    pub fn g_under(&self) -> Result<CMat> {
        linalg::invert_small(&self.inv_field.mean())
            .ok_or_else(|| Error::singular("mean of g^{-1} is singular"))
    }

    pub fn eval(&self, x: &[f64]) -> Result<CMat> {
        match &self.expr {
            Some(e) => Ok(e.eval(&self.lattice, x)),
            None => Err(Error::unsupported(
                "coefficient has no closed form; arbitrary-point evaluation unavailable",
            )),
        }
    }

    pub fn eval_scaled(&self, x: &[f64], eps: f64) -> Result<CMat> {
        match &self.expr {
            Some(e) => Ok(e.eval_scaled(&self.lattice, x, eps)),
            None => Err(Error::unsupported(
                "coefficient has no closed form; arbitrary-point evaluation unavailable",
            )),
        }
    }
}

/// The canonical 1-D two-phase coefficient: value `lo` on the first half of
/// the cell, `hi` on the second.
pub fn two_phase_1d(lo: f64, hi: f64) -> GExpr {
    GExpr::TwoPhase {
        axis: 0,
        split: 0.5,
        first: CMat::from_element(1, 1, Complex64::new(lo, 0.0)),
        second: CMat::from_element(1, 1, Complex64::new(hi, 0.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn two_phase_means() {
        let lat = Lattice::unit(1);
        let g = CoefficientG::from_expr(two_phase_1d(1.0, 4.0), lat, &[256]).unwrap();
        assert!((g.g_bar()[(0, 0)].re - 2.5).abs() < 1e-12);
        assert!((g.g_under().unwrap()[(0, 0)].re - 1.6).abs() < 1e-12);
        assert!((g.g_inf - 4.0).abs() < 1e-12);
        assert!((g.ginv_inf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_trig_scalar() {
        // g(x) = (2 + sin x)^{-1} on the 2 pi cell: mean of g^{-1} is 2
        let lat = Lattice::rectangular(&[2.0 * PI]).unwrap();
        let expr = GExpr::InvTrigScalar {
            mean: 2.0,
            harmonics: vec![(vec![1], Complex64::new(0.0, -0.5))],
        };
        let g = CoefficientG::from_expr(expr, lat.clone(), &[128]).unwrap();
        let x = [PI / 2.0];
        assert!((g.eval(&x).unwrap()[(0, 0)].re - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.g_under().unwrap()[(0, 0)].re - 0.5).abs() < 1e-12);
        // rescaled evaluation wraps periodically
        let y = [(PI / 2.0) * (1.0 / 16.0) + 2.0 * PI * (1.0 / 16.0) * 5.0];
        assert!(
            (g.eval_scaled(&y, 1.0 / 16.0).unwrap()[(0, 0)].re - 1.0 / 3.0).abs() < 1e-12
        );
    }

    #[test]
    fn random_gram_is_positive_definite_across_seeds() {
        let lat = Lattice::unit(2);
        for seed in 0..8 {
            let expr = random_gram_expr(2, 2, 1, 5.0, seed, false, &lat).unwrap();
            let g = CoefficientG::from_expr(expr, lat.clone(), &[16, 16]).unwrap();
            assert!(g.min_eig >= 1.0 - 1e-9, "seed {seed}: min eig {}", g.min_eig);
            // the contrast calibration is probe-based, so only approximate
            assert!(g.g_inf <= 5.0 * 1.05, "seed {seed}: sup {}", g.g_inf);
            assert!(g.g_inf * g.ginv_inf >= 1.0);
        }
    }

    #[test]
    fn non_positive_coefficient_is_rejected() {
        let lat = Lattice::unit(1);
        let expr = GExpr::TwoPhase {
            axis: 0,
            split: 0.5,
            first: CMat::from_element(1, 1, Complex64::new(-1.0, 0.0)),
            second: CMat::from_element(1, 1, Complex64::new(1.0, 0.0)),
        };
        assert!(CoefficientG::from_expr(expr, lat, &[32]).is_err());
    }

    #[test]
    fn trig_poly_matches_manual_formula() {
        let lat = Lattice::unit(2);
        let mean = CMat::identity(2, 2) * Complex64::new(3.0, 0.0);
        let c = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.25, 0.0),
                Complex64::new(0.0, 0.25),
                Complex64::new(0.1, 0.0),
                Complex64::new(0.25, 0.0),
            ],
        );
        let expr = GExpr::TrigPoly {
            mean: mean.clone(),
            harmonics: vec![(vec![1, 0], c.clone())],
        };
        let x = [0.3, 0.9];
        let e = Complex64::new(0.0, 2.0 * PI * 0.3).exp();
        let manual = mean + &c * e + c.adjoint() * e.conj();
        let got = expr.eval(&lat, &x);
        assert!((got - manual).norm() < 1e-12);
    }
}
