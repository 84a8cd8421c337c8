//! Reflection extension of bounded-domain functions to the surrounding
//! torus.
//!
//! Near each face the extension is a weighted sum of compressed reflections
//! u(b - beta_j (x - b)) with beta_j = j / (2p); the weights match one-sided
//! derivatives up to order 2p - 1 at the face, so H^p regularity (with
//! margin) survives. A smoothstep cutoff with 2p vanishing derivatives
//! brings the extension to zero over the outer half of each collar, making
//! it periodic. Axis-by-axis composition handles boxes.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Reflection weights: sum_j w_j (-beta_j)^s = 1 for s = 0..2p-1.
#[derive(Clone, Debug)]
pub struct Reflection {
    pub p: usize,
    pub betas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Reflection {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("form order must be positive"));
        }
        let k = 2 * p;
        let betas: Vec<f64> = (1..=k).map(|j| j as f64 / k as f64).collect();
        let mut a = nalgebra::DMatrix::<f64>::zeros(k, k);
        let mut rhs = nalgebra::DVector::<f64>::zeros(k);
        for s in 0..k {
            for (j, &b) in betas.iter().enumerate() {
                a[(s, j)] = (-b).powi(s as i32);
            }
            rhs[s] = 1.0;
        }
        let weights = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::singular("reflection Vandermonde is singular"))?;
        Ok(Reflection {
            p,
            betas,
            weights: weights.iter().cloned().collect(),
        })
    }
}

/// Smoothstep of degree 2k+1: 0 at 0, 1 at 1, derivatives 1..=k vanish at
/// both ends.
pub fn smoothstep(k: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let binom = |n: usize, r: usize| -> f64 {
        let mut acc = 1.0f64;
        for i in 0..r {
            acc *= (n - i) as f64 / (r - i) as f64;
        }
        acc
    };
    let mut acc = 0.0;
    for i in 0..=k {
        let c = binom(k + i, i) * binom(2 * k + 1, k - i) * if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += c * t.powi((k + 1 + i) as i32);
    }
    acc
}

/// One axis of a box extension: domain [a, b] inside a circle of length
/// `torus_len`, collar split evenly between the two faces.
#[derive(Clone, Debug)]
pub struct Extension1d {
    pub a: f64,
    pub b: f64,
    pub torus_len: f64,
    pub refl: Reflection,
    /// width of each face's collar (half the total complement)
    pub side: f64,
}

impl Extension1d {
    pub fn new(a: f64, b: f64, torus_len: f64, p: usize) -> Result<Self> {
        let diam = b - a;
        if !(diam > 0.0) || !(torus_len > diam) {
            return Err(Error::invalid("domain must fit strictly inside the torus"));
        }
        let collar = torus_len - diam;
        if collar < 0.25 * diam {
            return Err(Error::invalid(format!(
                "collar {collar:.3e} is thinner than a quarter of the domain diameter {diam:.3e}"
            )));
        }
        let side = 0.5 * collar;
        // reflections reach beta_max * side = side into the domain
        if side > diam {
            return Err(Error::invalid(
                "collar side exceeds the domain diameter; reflections would leave the domain",
            ));
        }
        Ok(Extension1d {
            a,
            b,
            torus_len,
            refl: Reflection::new(p)?,
            side,
        })
    }

    /// Cutoff: 1 on the inner half of a face collar, smoothstep down on the
    /// outer half, with 2p vanishing derivatives at both ends.
    fn cut(&self, dist: f64) -> f64 {
        let half = 0.5 * self.side;
        if dist <= half {
            1.0
        } else {
            1.0 - smoothstep(2 * self.refl.p, (dist - half) / half)
        }
    }

    /// Evaluate the extension at any real coordinate; `u` is only called
    /// inside [a, b].
    pub fn eval(&self, u: &dyn Fn(f64) -> Complex64, x: f64) -> Complex64 {
        let t = (x - self.a).rem_euclid(self.torus_len) + self.a;
        if t <= self.b {
            return u(t);
        }
        let mut acc = Complex64::default();
        let dist_r = t - self.b;
        if dist_r < self.side {
            let chi = self.cut(dist_r);
            if chi != 0.0 {
                let mut s = Complex64::default();
                for (w, be) in self.refl.weights.iter().zip(&self.refl.betas) {
                    s += u(self.b - be * dist_r) * *w;
                }
                acc += s * chi;
            }
        }
        let dist_l = self.a + self.torus_len - t;
        if dist_l < self.side {
            let chi = self.cut(dist_l);
            if chi != 0.0 {
                let mut s = Complex64::default();
                for (w, be) in self.refl.weights.iter().zip(&self.refl.betas) {
                    s += u(self.a + be * dist_l) * *w;
                }
                acc += s * chi;
            }
        }
        acc
    }
}

/// Tensor-product extension of a box domain, axis by axis.
#[derive(Clone, Debug)]
pub struct ExtensionBox {
    pub axes: Vec<Extension1d>,
}

impl ExtensionBox {
    pub fn new(a: &[f64], b: &[f64], torus_lens: &[f64], p: usize) -> Result<Self> {
        if a.len() != b.len() || a.len() != torus_lens.len() {
            return Err(Error::invalid("box extension: dimension mismatch"));
        }
        let axes = a
            .iter()
            .zip(b)
            .zip(torus_lens)
            .map(|((&av, &bv), &tv)| Extension1d::new(av, bv, tv, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExtensionBox { axes })
    }

    /// Evaluate at a point of the torus; `u` is called only inside the box.
    pub fn eval(&self, u: &dyn Fn(&[f64]) -> Complex64, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.axes.len());
        self.eval_rec(u, x, &mut vec![0.0; x.len()], x.len())
    }

    fn eval_rec(
        &self,
        u: &dyn Fn(&[f64]) -> Complex64,
        x: &[f64],
        buf: &mut Vec<f64>,
        axis: usize,
    ) -> Complex64 {
        if axis == 0 {
            return u(buf);
        }
        let ax = axis - 1;
        let ext = &self.axes[ax];
        // reuse the 1-D machinery by treating the remaining axes as a
        // parameterized scalar function
        let t = (x[ax] - ext.a).rem_euclid(ext.torus_len) + ext.a;
        if t <= ext.b {
            buf[ax] = t;
            return self.eval_rec(u, x, buf, ax);
        }
        let mut acc = Complex64::default();
        let dist_r = t - ext.b;
        if dist_r < ext.side {
            let chi = ext.cut(dist_r);
            if chi != 0.0 {
                let mut s = Complex64::default();
                for (w, be) in ext.refl.weights.iter().zip(&ext.refl.betas) {
                    buf[ax] = ext.b - be * dist_r;
                    s += self.eval_rec(u, x, buf, ax) * *w;
                }
                acc += s * chi;
            }
        }
        let dist_l = ext.a + ext.torus_len - t;
        if dist_l < ext.side {
            let chi = ext.cut(dist_l);
            if chi != 0.0 {
                let mut s = Complex64::default();
                for (w, be) in ext.refl.weights.iter().zip(&ext.refl.betas) {
                    buf[ax] = ext.a + be * dist_l;
                    s += self.eval_rec(u, x, buf, ax) * *w;
                }
                acc += s * chi;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_weights_match_derivatives() {
        for p in 1..=3usize {
            let r = Reflection::new(p).unwrap();
            for s in 0..2 * p {
                let acc: f64 = r
                    .weights
                    .iter()
                    .zip(&r.betas)
                    .map(|(w, b)| w * (-b).powi(s as i32))
                    .sum();
                assert!((acc - 1.0).abs() < 1e-8, "p = {p}, s = {s}, acc = {acc}");
            }
        }
    }

    #[test]
    fn smoothstep_endpoints_and_monotonicity() {
        for k in 1..=4usize {
            assert_eq!(smoothstep(k, 0.0), 0.0);
            assert_eq!(smoothstep(k, 1.0), 1.0);
            assert!((smoothstep(k, 0.5) - 0.5).abs() < 1e-12); // odd symmetry
            let mut prev = 0.0;
            for i in 0..=50 {
                let v = smoothstep(k, i as f64 / 50.0);
                assert!(v >= prev - 1e-12);
                prev = v;
            }
            // vanishing derivatives at 0: S(t) ~ C t^{k+1} with a binomial
            // leading constant, so the difference quotient is O(h^k)
            let h = 1e-3;
            let d1 = (smoothstep(k, h) - smoothstep(k, 0.0)) / h;
            assert!(d1.abs() < 200.0 * h.powi(k as i32), "k = {k}, d1 = {d1}");
        }
    }

    #[test]
    fn polynomials_continue_exactly_on_the_inner_collar() {
        // p = 1 matches derivatives 0 and 1: affine functions continue
        // identically where the cutoff is still 1
        let ext = Extension1d::new(0.0, 1.0, 2.0, 1).unwrap();
        let f = |x: f64| Complex64::new(1.0 + 2.0 * x, 0.0);
        for s in 0..=10 {
            let x = 1.0 + 0.25 * s as f64 / 10.0; // inner half of the right collar
            let v = ext.eval(&f, x);
            assert!((v - Complex64::new(1.0 + 2.0 * x, 0.0)).norm() < 1e-12);
        }
        // left face continues across the torus seam: x slightly below 0
        for s in 1..=10 {
            let x = -0.25 * s as f64 / 10.0;
            let v = ext.eval(&f, x + 2.0);
            assert!((v - Complex64::new(1.0 + 2.0 * x, 0.0)).norm() < 1e-12);
        }
        // far side of the collar is fully cut off
        assert_eq!(ext.eval(&f, 1.5), Complex64::default());
    }

    #[test]
    fn extension_is_smooth_across_the_face() {
        // one-sided n-th differences anchored at the face must agree for
        // n = 0..=2p-1 (the reflection matches that many derivatives); a
        // genuine jump would show up as an O(1) relative gap
        let p = 2usize;
        let ext = Extension1d::new(0.0, 1.0, 2.0, p).unwrap();
        let f = |x: f64| Complex64::new((2.1 * x).sin() + 0.3 * x * x, 0.0);
        let h = 1e-3;
        let pe = |x: f64| ext.eval(&f, x).re;
        let binom = |n: usize, i: usize| -> f64 {
            let mut c = 1.0;
            for q in 0..i {
                c *= (n - q) as f64 / (i - q) as f64;
            }
            c
        };
        for n in 0..2 * p {
            let backward: f64 = (0..=n)
                .map(|i| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    sign * binom(n, i) * pe(1.0 - i as f64 * h)
                })
                .sum::<f64>()
                / h.powi(n as i32);
            let forward: f64 = (0..=n)
                .map(|i| {
                    let sign = if (n - i) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * binom(n, i) * pe(1.0 + i as f64 * h)
                })
                .sum::<f64>()
                / h.powi(n as i32);
            let scale = backward.abs().max(1.0);
            let tol = if n == 0 { 1e-12 } else { 0.05 };
            assert!(
                (backward - forward).abs() / scale < tol,
                "order {n}: backward {backward}, forward {forward}"
            );
        }
    }

    #[test]
    fn box_extension_continues_bilinear_functions() {
        let ext = ExtensionBox::new(&[0.0, 0.0], &[0.5, 0.5], &[1.0, 1.0], 1).unwrap();
        let f = |x: &[f64]| Complex64::new(1.0 + x[0] + 2.0 * x[1] + x[0] * x[1], 0.0);
        // inner collar corner: both axes extended
        let pt = [0.55, 0.56];
        let v = ext.eval(&f, &pt);
        let want = 1.0 + pt[0] + 2.0 * pt[1] + pt[0] * pt[1];
        assert!((v - Complex64::new(want, 0.0)).norm() < 1e-10, "got {v}");
        // interior passes through
        let v2 = ext.eval(&f, &[0.3, 0.2]);
        assert!((v2 - Complex64::new(1.0 + 0.3 + 0.4 + 0.06, 0.0)).norm() < 1e-12);
        // collar midline vanishes
        let v3 = ext.eval(&f, &[0.75, 0.25]);
        assert_eq!(v3, Complex64::default());
    }

    #[test]
    fn thin_collar_is_rejected() {
        assert!(Extension1d::new(0.0, 1.0, 1.05, 1).is_err());
    }
}
