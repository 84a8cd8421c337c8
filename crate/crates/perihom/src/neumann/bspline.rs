//! B-spline bases on general non-decreasing knot vectors.
//!
//! The bounded-domain Galerkin spaces use clamped splines whose breakpoints
//! follow the mesh; interior knots can be doubled at coefficient interfaces
//! to lower the continuity there to match the solution's actual regularity
//! (flux continuity forces a kink in the p-th derivative at a jump of g).

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BSplineBasis {
    pub degree: usize,
    pub knots: Vec<f64>,
}

impl BSplineBasis {
    /// Clamped basis on the given strictly increasing breakpoints. Interior
    /// breakpoints listed in `doubled` receive knot multiplicity 2 (one
    /// continuity order less); all others are simple.
    pub fn clamped(breaks: &[f64], degree: usize, doubled: &[f64]) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::invalid("need at least one element"));
        }
        if degree == 0 {
            return Err(Error::invalid("spline degree must be positive"));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        let a = breaks[0];
        let b = *breaks.last().unwrap();
        let tol = 1e-12 * (b - a).abs();
        let mut knots = vec![a; degree + 1];
        for &x in &breaks[1..breaks.len() - 1] {
            let mult = if doubled.iter().any(|&d| (d - x).abs() <= tol) {
                2
            } else {
                1
            };
            if mult > degree {
                return Err(Error::invalid(
                    "knot multiplicity exceeds the degree; the basis would be discontinuous",
                ));
            }
            for _ in 0..mult {
                knots.push(x);
            }
        }
        knots.extend(std::iter::repeat(b).take(degree + 1));
        for d in doubled {
            if !breaks[1..breaks.len() - 1]
                .iter()
                .any(|&x| (d - x).abs() <= tol)
            {
                return Err(Error::invalid(format!(
                    "doubled knot {d} is not an interior breakpoint"
                )));
            }
        }
        Ok(BSplineBasis {
            degree,
            knots,
        })
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.knots.len() - 1 - self.degree])
    }

    /// Unique knots (the mesh including interfaces).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &t in &self.knots {
            if out.last().map(|&l| t > l).unwrap_or(true) {
                out.push(t);
            }
        }
        out
    }

    /// Index mu with knots[mu] <= x < knots[mu+1], clamped into the valid
    /// span range; the right endpoint belongs to the last span.
    pub fn find_span(&self, x: f64) -> usize {
        let deg = self.degree;
        let n = self.len() - 1;
        if x >= self.knots[n + 1] {
            return n;
        }
        if x <= self.knots[deg] {
            return deg;
        }
        let (mut lo, mut hi) = (deg, n + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values of the degree+1 basis functions that are nonzero at x.
    /// Returns (first_index, values): basis first_index + r has value
    /// values[r].
    pub fn eval_all(&self, x: f64) -> (usize, Vec<f64>) {
        let deg = self.degree;
        let i = self.find_span(x);
        let mut vals = vec![0.0; deg + 1];
        let mut left = vec![0.0; deg + 1];
        let mut right = vec![0.0; deg + 1];
        vals[0] = 1.0;
        for j in 1..=deg {
            left[j] = x - self.knots[i + 1 - j];
            right[j] = self.knots[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        (i - deg, vals)
    }

    /// Values and derivatives up to order nd of the nonzero basis functions
    /// at x. Returns (first_index, ders) with ders[k][r] the k-th derivative
    /// of basis first_index + r.
    pub fn eval_ders(&self, x: f64, nd: usize) -> (usize, Vec<Vec<f64>>) {
        let deg = self.degree;
        let i = self.find_span(x);
        let nd = nd.min(deg);
        // triangular table of values and knot differences
        let mut ndu = vec![vec![0.0; deg + 1]; deg + 1];
        let mut left = vec![0.0; deg + 1];
        let mut right = vec![0.0; deg + 1];
        ndu[0][0] = 1.0;
        for j in 1..=deg {
            left[j] = x - self.knots[i + 1 - j];
            right[j] = self.knots[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let tmp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; deg + 1]; nd + 1];
        for r in 0..=deg {
            ders[0][r] = ndu[r][deg];
        }
        let mut a = vec![vec![0.0; deg + 1]; 2];
        for r in 0..=deg {
            let mut s1 = 0usize;
            let mut s2 = 1usize;
            a[0][0] = 1.0;
            for k in 1..=nd {
                let mut dv = 0.0;
                let rk = r as i64 - k as i64;
                let pk = deg - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    dv = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as i64 - 1 <= pk as i64 { k - 1 } else { deg - r };
                for j in j1..=j2 {
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as i64) as usize];
                    dv += a[s2][j] * ndu[(rk + j as i64) as usize][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    dv += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = dv;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = deg as f64;
        for k in 1..=nd {
            for r in 0..=deg {
                ders[k][r] *= fac;
            }
            fac *= (deg - k) as f64;
        }
        (i - deg, ders)
    }
}

/// A function in a spline space: basis plus coefficient vector. Evaluation
/// works for real or complex coefficients through the closure helpers.
#[derive(Clone, Debug)]
pub struct Spline<T> {
    pub basis: std::sync::Arc<BSplineBasis>,
    pub coeffs: Vec<T>,
}

impl<T> Spline<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::iter::Sum,
{
    pub fn new(basis: std::sync::Arc<BSplineBasis>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::invalid("coefficient count does not match the basis"));
        }
        Ok(Spline { basis, coeffs })
    }

    pub fn eval(&self, x: f64) -> T {
        let (i0, vals) = self.basis.eval_all(x);
        (0..vals.len()).map(|r| self.coeffs[i0 + r] * vals[r]).sum()
    }

    pub fn eval_der(&self, x: f64, order: usize) -> T {
        let (i0, ders) = self.basis.eval_ders(x, order);
        let row = &ders[order.min(self.basis.degree)];
        if order > self.basis.degree {
            return (0..row.len()).map(|r| self.coeffs[i0 + r] * 0.0).sum();
        }
        (0..row.len()).map(|r| self.coeffs[i0 + r] * row[r]).sum()
    }
}
