//! Midpoint-rule measurement of fields over a box domain inside the torus.
//!
//! All error norms between bounded-domain solutions (splines, Q1 functions)
//! and torus fields (correctors, flux approximants) are computed on one
//! shared lattice: the torus grid restricted to the domain, evaluated at
//! cell midpoints. Domain faces, coefficient interfaces and mesh knots all
//! sit on lattice nodes, so the integrands are smooth inside every
//! measurement cell and the composite midpoint rule keeps its second-order
//! accuracy. Torus fields are evaluated at midpoints spectrally, by a
//! half-cell phase shift of their coefficients (Nyquist rows are dropped,
//! the cosine convention at midpoints).

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::lattice::Lattice;
use crate::symbol::MultiIndex;
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct MeasurementGrid {
    pub torus: Lattice,
    pub dims: Vec<usize>,
    /// first torus cell of the domain window, per axis
    pub start: Vec<usize>,
    /// number of cells of the window, per axis
    pub count: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MeasurementGrid {
    pub fn new(torus: &Lattice, dims: &[usize], a: &[f64], b: &[f64]) -> Result<Self> {
        let d = torus.dim();
        if dims.len() != d || a.len() != d || b.len() != d {
            return Err(Error::invalid("measurement grid: dimension mismatch"));
        }
        let mut start = Vec::with_capacity(d);
        let mut count = Vec::with_capacity(d);
        for j in 0..d {
            let lj = torus.lengths()[j];
            let h = lj / dims[j] as f64;
            if !(b[j] > a[j]) || b[j] - a[j] > lj + 1e-12 * lj {
                return Err(Error::invalid("domain box does not fit in the torus"));
            }
            let s = a[j] / h;
            let c = (b[j] - a[j]) / h;
            if (s - s.round()).abs() > 1e-9 || (c - c.round()).abs() > 1e-9 {
                return Err(Error::invalid(
                    "domain faces must lie on measurement lattice nodes",
                ));
            }
            start.push(s.round() as usize % dims[j]);
            count.push(c.round() as usize);
        }
        Ok(MeasurementGrid {
            torus: torus.clone(),
            dims: dims.to_vec(),
            start,
            count,
            a: a.to_vec(),
            b: b.to_vec(),
        })
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.torus.lengths()[axis] / self.dims[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dims.len()).map(|j| self.spacing(j)).product()
    }

    pub fn total_cells(&self) -> usize {
        self.count.iter().product()
    }

    /// Midpoint of domain cell `flat` (row-major over `count`) in unwrapped
    /// domain coordinates (a <= x < b + spacing).
    pub fn midpoint(&self, flat: usize) -> Vec<f64> {
        let d = self.count.len();
        let mut rem = flat;
        let mut out = vec![0.0; d];
        for j in (0..d).rev() {
            let i = rem % self.count[j];
            rem /= self.count[j];
            out[j] = self.a[j] + (i as f64 + 0.5) * self.spacing(j);
        }
        out
    }

    /// Midpoint values of component (r, c) of a torus field over the domain
    /// window, optionally of a partial derivative. The field must live on
    /// this grid.
    pub fn sample_field(
        &self,
        f: &PeriodicField,
        r: usize,
        c: usize,
        deriv: Option<&MultiIndex>,
    ) -> Result<Vec<Complex64>> {
        if f.lattice != self.torus || f.dims != self.dims {
            return Err(Error::invalid(
                "field does not live on the measurement torus grid",
            ));
        }
        let d = self.dims.len();
        let n: usize = self.dims.iter().product();
        let src = f.coeffs_of(r, c);
        // per-axis tables: signed mode -> (i xi)^beta e^{i xi h / 2}, Nyquist dropped
        let mut tables: Vec<Vec<Complex64>> = Vec::with_capacity(d);
        for j in 0..d {
            let nj = self.dims[j];
            let lj = self.torus.lengths()[j];
            let order = deriv.map(|m| m.0[j]).unwrap_or(0);
            let mut tab = vec![Complex64::default(); nj];
            for idx in 0..nj {
                if idx == nj / 2 {
                    continue;
                }
                let k = if idx < nj / 2 {
                    idx as i64
                } else {
                    idx as i64 - nj as i64
                };
                let xi = 2.0 * std::f64::consts::PI * k as f64 / lj;
                let phase = Complex64::new(0.0, xi * 0.5 * lj / nj as f64).exp();
                let dfac = Complex64::new(0.0, xi).powu(order as u32);
                tab[idx] = phase * dfac;
            }
            tables.push(tab);
        }
        let mut shifted = vec![Complex64::default(); n];
        let strides = {
            let mut st = vec![1usize; d];
            for a in (0..d.saturating_sub(1)).rev() {
                st[a] = st[a + 1] * self.dims[a + 1];
            }
            st
        };
        for t in 0..n {
            let mut fac = Complex64::new(1.0, 0.0);
            for j in 0..d {
                fac *= tables[j][(t / strides[j]) % self.dims[j]];
            }
            shifted[t] = src[t] * fac;
        }
        let mid =
            PeriodicField::from_coeffs(self.torus.clone(), 1, 1, &self.dims, shifted)?;
        let vals = mid.values_of(0, 0);
        // gather the domain window with wrap
        let total = self.total_cells();
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut t = 0usize;
            for j in (0..d).rev() {
                let i = rem % self.count[j];
                rem /= self.count[j];
                t += ((self.start[j] + i) % self.dims[j]) * strides[j];
            }
            out.push(vals[t]);
        }
        Ok(out)
    }

    /// Midpoint values of a scalar function of domain coordinates.
    pub fn sample_fn(&self, f: &dyn Fn(&[f64]) -> Complex64) -> Vec<Complex64> {
        (0..self.total_cells())
            .map(|t| f(&self.midpoint(t)))
            .collect()
    }

    pub fn norm_l2(&self, vals: &[Complex64]) -> f64 {
        debug_assert_eq!(vals.len(), self.total_cells());
        (self.cell_volume() * vals.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }
}

/// c = a - b elementwise.
pub fn sub_values(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    #[test]
    fn norm_of_sine_on_half_torus() {
        let torus = Lattice::rectangular(&[2.0 * PI]).unwrap();
        let f = PeriodicField::from_fn(torus.clone(), 1, 1, &[256], |x| {
            DMatrix::from_element(1, 1, Complex64::new(x[0].sin(), 0.0))
        })
        .unwrap();
        let grid = MeasurementGrid::new(&torus, &[256], &[0.0], &[PI]).unwrap();
        let vals = grid.sample_field(&f, 0, 0, None).unwrap();
        let n = grid.norm_l2(&vals);
        // integral over [0, pi] of sin^2 = pi / 2; sin is band-limited so the
        // midpoint sampling is exact in value, quadrature error ~ h^2
        assert!((n - (PI / 2.0).sqrt()).abs() < 1e-4, "norm {n}");
        // derivative sampling: d/dx sin = cos, integral over [0,pi] = pi/2 again
        let dv = grid
            .sample_field(&f, 0, 0, Some(&MultiIndex(vec![1])))
            .unwrap();
        let dn = grid.norm_l2(&dv);
        assert!((dn - (PI / 2.0).sqrt()).abs() < 1e-4);
        // pointwise: first midpoint is h/2
        let h = grid.spacing(0);
        assert!((vals[0] - Complex64::new((0.5 * h).sin(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn window_can_wrap_around_the_seam() {
        let torus = Lattice::rectangular(&[2.0]).unwrap();
        let f = PeriodicField::from_fn(torus.clone(), 1, 1, &[16], |x| {
            DMatrix::from_element(1, 1, Complex64::new((PI * x[0]).cos(), 0.0))
        })
        .unwrap();
        // domain [1.5, 2.5) wraps through 0
        let grid = MeasurementGrid::new(&torus, &[16], &[1.5], &[2.5]).unwrap();
        assert_eq!(grid.total_cells(), 8);
        let vals = grid.sample_field(&f, 0, 0, None).unwrap();
        for t in 0..8 {
            let x = grid.midpoint(t)[0];
            assert!((vals[t] - Complex64::new((PI * x).cos(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn misaligned_faces_are_rejected() {
        let torus = Lattice::rectangular(&[1.0]).unwrap();
        assert!(MeasurementGrid::new(&torus, &[16], &[0.0], &[0.53]).is_err());
    }

    #[test]
    fn box_window_in_two_dimensions() {
        let torus = Lattice::rectangular(&[1.0, 1.0]).unwrap();
        let f = PeriodicField::from_fn(torus.clone(), 1, 1, &[32, 32], |x| {
            DMatrix::from_element(
                1,
                1,
                Complex64::new((2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(), 0.0),
            )
        })
        .unwrap();
        let grid =
            MeasurementGrid::new(&torus, &[32, 32], &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(grid.total_cells(), 256);
        let vals = grid.sample_field(&f, 0, 0, None).unwrap();
        let want = grid.sample_fn(&|x| {
            Complex64::new((2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(), 0.0)
        });
        for (v, w) in vals.iter().zip(&want) {
            assert!((v - w).norm() < 1e-12);
        }
        // integral of sin^2 cos^2 over the quarter square = 1/16
        let n = grid.norm_l2(&vals);
        assert!((n - 0.25).abs() < 1e-3, "norm {n}");
    }
}
