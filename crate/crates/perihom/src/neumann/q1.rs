//! Bilinear (Q1) finite elements on a rectangle, for second-order scalar
//! Neumann problems in two dimensions.
//!
//! Nodes are numbered lexicographically, x-major: node (i, j) lives at dof
//! i * (ny + 1) + j, so the stiffness bandwidth is ny + 2 and the real SPD
//! systems factor with the banded Cholesky. Coefficients are sampled at the
//! Gauss points of each cell.

use crate::error::{Error, Result};
use crate::neumann::banded::SymBanded;
use crate::neumann::space::gauss_legendre;

#[derive(Clone, Debug)]
pub struct Q1Space {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub cells: [usize; 2],
}

#[inline]
fn shape(s: f64) -> [f64; 2] {
    [1.0 - s, s]
}

impl Q1Space {
    pub fn new(a: [f64; 2], b: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        if b[0] <= a[0] || b[1] <= a[1] || cells[0] == 0 || cells[1] == 0 {
            return Err(Error::invalid("Q1 space needs a nonempty rectangle"));
        }
        Ok(Q1Space { a, b, cells })
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.b[0] - self.a[0]) / self.cells[0] as f64,
            (self.b[1] - self.a[1]) / self.cells[1] as f64,
        ]
    }

    pub fn dofs(&self) -> usize {
        (self.cells[0] + 1) * (self.cells[1] + 1)
    }

    pub fn bandwidth(&self) -> usize {
        self.cells[1] + 2
    }

    #[inline]
    fn node(&self, i: usize, j: usize) -> usize {
        i * (self.cells[1] + 1) + j
    }

    /// Stiffness (grad v . g grad u) and mass matrices, `quad` Gauss points
    /// per axis per cell. The coefficient is symmetrized before use.
    pub fn assemble(
        &self,
        g: &dyn Fn(&[f64]) -> [[f64; 2]; 2],
        quad: usize,
    ) -> Result<(SymBanded<f64>, SymBanded<f64>)> {
        let (nodes, weights) = gauss_legendre(quad);
        let [hx, hy] = self.spacing();
        let jac = 0.25 * hx * hy;
        let kw = self.bandwidth();
        let mut stiff = SymBanded::zeros(self.dofs(), kw);
        let mut mass = SymBanded::zeros(self.dofs(), kw);
        let mut k_loc = [[0.0f64; 4]; 4];
        let mut m_loc = [[0.0f64; 4]; 4];
        for ci in 0..self.cells[0] {
            let x0 = self.a[0] + ci as f64 * hx;
            for cj in 0..self.cells[1] {
                let y0 = self.a[1] + cj as f64 * hy;
                for row in k_loc.iter_mut() {
                    *row = [0.0; 4];
                }
                for row in m_loc.iter_mut() {
                    *row = [0.0; 4];
                }
                for (qi, &u) in nodes.iter().enumerate() {
                    let s = 0.5 * (u + 1.0);
                    for (qj, &v) in nodes.iter().enumerate() {
                        let t = 0.5 * (v + 1.0);
                        let w = weights[qi] * weights[qj] * jac;
                        let gq = g(&[x0 + s * hx, y0 + t * hy]);
                        let g00 = gq[0][0];
                        let g11 = gq[1][1];
                        let g01 = 0.5 * (gq[0][1] + gq[1][0]);
                        if !(g00.is_finite() && g11.is_finite() && g01.is_finite()) {
                            return Err(Error::invalid(
                                "coefficient is not finite at a quadrature point",
                            ));
                        }
                        let ps = shape(s);
                        let pt = shape(t);
                        // local node (a, b): value ps[a] pt[b],
                        // gradient ((-1)^(1-a) pt[b] / hx, ps[a] (-1)^(1-b) / hy)
                        let mut val = [0.0f64; 4];
                        let mut gx = [0.0f64; 4];
                        let mut gy = [0.0f64; 4];
                        for a in 0..2 {
                            let da = if a == 0 { -1.0 } else { 1.0 };
                            for bb in 0..2 {
                                let db = if bb == 0 { -1.0 } else { 1.0 };
                                let l = 2 * a + bb;
                                val[l] = ps[a] * pt[bb];
                                gx[l] = da * pt[bb] / hx;
                                gy[l] = ps[a] * db / hy;
                            }
                        }
                        for l1 in 0..4 {
                            for l2 in 0..4 {
                                k_loc[l1][l2] += w
                                    * (gx[l1] * (g00 * gx[l2] + g01 * gy[l2])
                                        + gy[l1] * (g01 * gx[l2] + g11 * gy[l2]));
                                m_loc[l1][l2] += w * val[l1] * val[l2];
                            }
                        }
                    }
                }
                let glob = [
                    self.node(ci, cj),
                    self.node(ci, cj + 1),
                    self.node(ci + 1, cj),
                    self.node(ci + 1, cj + 1),
                ];
                for l1 in 0..4 {
                    for l2 in 0..4 {
                        if glob[l1] >= glob[l2] {
                            stiff.add_lower(glob[l1], glob[l2], k_loc[l1][l2]);
                            mass.add_lower(glob[l1], glob[l2], m_loc[l1][l2]);
                        }
                    }
                }
            }
        }
        Ok((stiff, mass))
    }

    /// Load vector (f, v) for real data.
    pub fn load_vector(&self, f: &dyn Fn(&[f64]) -> f64, quad: usize) -> Vec<f64> {
        let (nodes, weights) = gauss_legendre(quad);
        let [hx, hy] = self.spacing();
        let jac = 0.25 * hx * hy;
        let mut out = vec![0.0f64; self.dofs()];
        for ci in 0..self.cells[0] {
            let x0 = self.a[0] + ci as f64 * hx;
            for cj in 0..self.cells[1] {
                let y0 = self.a[1] + cj as f64 * hy;
                let glob = [
                    self.node(ci, cj),
                    self.node(ci, cj + 1),
                    self.node(ci + 1, cj),
                    self.node(ci + 1, cj + 1),
                ];
                for (qi, &u) in nodes.iter().enumerate() {
                    let s = 0.5 * (u + 1.0);
                    for (qj, &v) in nodes.iter().enumerate() {
                        let t = 0.5 * (v + 1.0);
                        let w = weights[qi] * weights[qj] * jac;
                        let fv = f(&[x0 + s * hx, y0 + t * hy]);
                        let ps = shape(s);
                        let pt = shape(t);
                        for a in 0..2 {
                            for bb in 0..2 {
                                out[glob[2 * a + bb]] += w * fv * ps[a] * pt[bb];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[inline]
    fn locate(&self, x: &[f64]) -> (usize, usize, f64, f64) {
        let [hx, hy] = self.spacing();
        let sx = (x[0] - self.a[0]) / hx;
        let sy = (x[1] - self.a[1]) / hy;
        debug_assert!(
            sx > -1e-9 && sx < self.cells[0] as f64 + 1e-9,
            "point outside domain"
        );
        let ci = (sx.floor() as isize).clamp(0, self.cells[0] as isize - 1) as usize;
        let cj = (sy.floor() as isize).clamp(0, self.cells[1] as isize - 1) as usize;
        (ci, cj, sx - ci as f64, sy - cj as f64)
    }

    pub fn eval(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        let (ci, cj, s, t) = self.locate(x);
        let ps = shape(s);
        let pt = shape(t);
        let mut acc = 0.0;
        for a in 0..2 {
            for bb in 0..2 {
                acc += coeffs[self.node(ci + a, cj + bb)] * ps[a] * pt[bb];
            }
        }
        acc
    }

    pub fn gradient(&self, coeffs: &[f64], x: &[f64]) -> [f64; 2] {
        let (ci, cj, s, t) = self.locate(x);
        let [hx, hy] = self.spacing();
        let ps = shape(s);
        let pt = shape(t);
        let mut gx = 0.0;
        let mut gy = 0.0;
        for a in 0..2 {
            let da = if a == 0 { -1.0 } else { 1.0 };
            for bb in 0..2 {
                let db = if bb == 0 { -1.0 } else { 1.0 };
                let c = coeffs[self.node(ci + a, cj + bb)];
                gx += c * da * pt[bb] / hx;
                gy += c * ps[a] * db / hy;
            }
        }
        [gx, gy]
    }
}

/// Solve (S - zeta M) u = F for real negative shift via banded Cholesky.
pub fn solve_shifted_real(
    s: &SymBanded<f64>,
    m: &SymBanded<f64>,
    zeta: f64,
    load: &[f64],
) -> Result<Vec<f64>> {
    if zeta >= 0.0 {
        return Err(Error::invalid(
            "real Cholesky path needs a negative real shift",
        ));
    }
    let mut sys = s.clone();
    sys.add_scaled(m, -zeta);
    let chol = sys.cholesky()?;
    Ok(chol.solve(load))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_g(_: &[f64]) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [0.0, 1.0]]
    }

    fn interpolate(sp: &Q1Space, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let [hx, hy] = sp.spacing();
        let mut out = vec![0.0; sp.dofs()];
        for i in 0..=sp.cells[0] {
            for j in 0..=sp.cells[1] {
                out[i * (sp.cells[1] + 1) + j] =
                    f(&[sp.a[0] + i as f64 * hx, sp.a[1] + j as f64 * hy]);
            }
        }
        out
    }

    #[test]
    fn linear_energies_are_exact() {
        let sp = Q1Space::new([0.0, 0.0], [1.0, 2.0], [7, 9]).unwrap();
        let (s, m) = sp.assemble(&identity_g, 2).unwrap();
        let u = interpolate(&sp, &|x| 3.0 * x[0] + 4.0 * x[1]);
        let su = s.matvec(&u);
        let mu = m.matvec(&u);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        // integral of |grad u|^2 = 25 * area = 50
        assert!((dot(&u, &su) - 50.0).abs() < 1e-10);
        // integral of (3x + 4y)^2 over [0,1]x[0,2] = 218/3
        assert!((dot(&u, &mu) - 218.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn variable_coefficient_energy_oracle() {
        // g = diag(2 + sin(2 pi x), 1), u = 3x: energy = 9 * mean(c) * area = 18 Ly
        let sp = Q1Space::new([0.0, 0.0], [1.0, 1.0], [16, 4]).unwrap();
        let g = |x: &[f64]| {
            [
                [2.0 + (2.0 * std::f64::consts::PI * x[0]).sin(), 0.0],
                [0.0, 1.0],
            ]
        };
        let (s, _) = sp.assemble(&g, 3).unwrap();
        let u = interpolate(&sp, &|x| 3.0 * x[0]);
        let su = s.matvec(&u);
        let e = u.iter().zip(&su).map(|(x, y)| x * y).sum::<f64>();
        assert!((e - 18.0).abs() < 1e-8, "energy {e}");
    }

    #[test]
    fn neumann_reaction_diffusion_converges() {
        // -lap u + u = 3 cos x cos y on [0,pi]^2 has the Neumann solution
        // u = cos x cos y; the Q1 error contracts by ~4 per refinement
        let pi = std::f64::consts::PI;
        let f = |x: &[f64]| 3.0 * x[0].cos() * x[1].cos();
        let exact = |x: &[f64]| x[0].cos() * x[1].cos();
        let mut errs = Vec::new();
        for n in [8usize, 16, 32] {
            let sp = Q1Space::new([0.0, 0.0], [pi, pi], [n, n]).unwrap();
            let (s, m) = sp.assemble(&identity_g, 2).unwrap();
            let load = sp.load_vector(&f, 3);
            let u = solve_shifted_real(&s, &m, -1.0, &load).unwrap();
            let diff: Vec<f64> = u
                .iter()
                .zip(interpolate(&sp, &exact))
                .map(|(a, b)| a - b)
                .collect();
            let md = m.matvec(&diff);
            errs.push(
                diff.iter()
                    .zip(&md)
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    .sqrt(),
            );
        }
        assert!(errs[2] < 0.01, "finest error {}", errs[2]);
        assert!(errs[0] / errs[1] > 3.0 && errs[1] / errs[2] > 3.0, "{errs:?}");
    }

    #[test]
    fn point_evaluation_matches_interpolant() {
        let sp = Q1Space::new([0.0, 0.5], [2.0, 1.5], [5, 4]).unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[0] * x[1];
        let u = interpolate(&sp, &f);
        // bilinear functions are reproduced exactly, including the gradient
        for &pt in &[[0.3, 0.77], [1.99, 0.51], [0.0, 1.5], [2.0, 0.5]] {
            assert!((sp.eval(&u, &pt) - f(&pt)).abs() < 1e-12);
            let g = sp.gradient(&u, &pt);
            assert!((g[0] - (2.0 + 0.5 * pt[1])).abs() < 1e-10);
            assert!((g[1] - (-3.0 + 0.5 * pt[0])).abs() < 1e-10);
        }
    }
}
