//! Fast solvers for large Q1 Neumann systems in two dimensions.
//!
//! The shifted systems (S + |zeta| M) u = F from oscillatory-coefficient
//! problems get dense in memory and slow under a banded Cholesky once the
//! mesh resolves many periods. This module solves them by conjugate
//! gradients with two ingredients that exploit the structure instead:
//!
//! * the coefficient g(x / eps) is periodic with an integer number of mesh
//!   cells per period, so the element matrices repeat; a small table of
//!   local 4x4 matrices replaces the assembled stiffness (`PeriodicCellOperator`),
//! * a constant diagonal coefficient makes the Q1 operator separable,
//!   a Kx (x) My + b Mx (x) Ky + c Mx (x) My, and both one-dimensional P1
//!   Neumann matrices are diagonalized by the type-I cosine basis
//!   cos(pi q j / n); the resulting exact inverse (`SeparableShiftSolver`)
//!   preconditions the oscillatory solve with the effective coefficient.

use crate::error::{Error, Result};
use crate::neumann::q1::Q1Space;
use crate::neumann::space::gauss_legendre;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// In-place half-weighted cosine transform of type I on n + 1 points,
/// (T v)_q = v_0 / 2 + (-1)^q v_n / 2 + sum_{0<j<n} v_j cos(pi q j / n),
/// computed through the FFT of the even extension of length 2 n. T is its
/// own inverse up to scale: T^2 = (n / 2) id.
pub struct Dct1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Dct1 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "cosine transform needs at least one cell");
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Dct1 {
            n,
            fft,
            buf: vec![Complex64::default(); 2 * n],
            scratch,
        }
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn apply(&mut self, v: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(v.len(), n + 1);
        self.buf[0] = Complex64::new(v[0], 0.0);
        self.buf[n] = Complex64::new(v[n], 0.0);
        for j in 1..n {
            let z = Complex64::new(v[j], 0.0);
            self.buf[j] = z;
            self.buf[2 * n - j] = z;
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for (q, out) in v.iter_mut().enumerate() {
            *out = 0.5 * self.buf[q].re;
        }
    }
}

/// Exact inverse of the separable Q1 Neumann operator
/// a Kx (x) My + b Mx (x) Ky + shift Mx (x) My on a uniform rectangle mesh.
///
/// The one-dimensional P1 stiffness and mass share the cosine eigenbasis
/// with a common half-weight at the interval ends: K c_q = k_q W c_q and
/// M c_q = m_q W c_q for c_q(j) = cos(pi q j / n), with
/// k_q = (2 / h)(1 - cos t), m_q = (h / 3)(2 + cos t), t = pi q / n. The
/// inverse reduces to two cosine transforms around a modal division.
pub struct SeparableShiftSolver {
    cells: [usize; 2],
    div: Vec<f64>,
    dct_x: Dct1,
    dct_y: Dct1,
    col: Vec<f64>,
}

/// Generalized eigenvalues (k_q, m_q) of the P1 Neumann stiffness and mass
/// on n cells of width h, in the cosine basis.
fn p1_eigenvalues(n: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut k = Vec::with_capacity(n + 1);
    let mut m = Vec::with_capacity(n + 1);
    for q in 0..=n {
        let c = (PI * q as f64 / n as f64).cos();
        k.push(2.0 / h * (1.0 - c));
        m.push(h / 3.0 * (2.0 + c));
    }
    (k, m)
}

impl SeparableShiftSolver {
    /// Solver for the operator with coefficient diag(g_diag) plus
    /// `shift` times the mass matrix; `shift` must be positive so the
    /// constant mode is invertible.
    pub fn new(space: &Q1Space, g_diag: [f64; 2], shift: f64) -> Result<Self> {
        if !(shift > 0.0) || !(g_diag[0] > 0.0) || !(g_diag[1] > 0.0) {
            return Err(Error::invalid(
                "separable solver needs positive diagonal coefficient and shift",
            ));
        }
        let [nx, ny] = space.cells;
        let [hx, hy] = space.spacing();
        let (kx, mx) = p1_eigenvalues(nx, hx);
        let (ky, my) = p1_eigenvalues(ny, hy);
        let mut div = vec![0.0; (nx + 1) * (ny + 1)];
        for qx in 0..=nx {
            for qy in 0..=ny {
                div[qx * (ny + 1) + qy] = g_diag[0] * kx[qx] * my[qy]
                    + g_diag[1] * mx[qx] * ky[qy]
                    + shift * mx[qx] * my[qy];
            }
        }
        Ok(SeparableShiftSolver {
            cells: space.cells,
            div,
            dct_x: Dct1::new(nx),
            dct_y: Dct1::new(ny),
            col: vec![0.0; nx + 1],
        })
    }

    fn transform_both_axes(&mut self, v: &mut [f64]) {
        let [nx, ny] = self.cells;
        for row in v.chunks_exact_mut(ny + 1) {
            self.dct_y.apply(row);
        }
        for j in 0..=ny {
            for i in 0..=nx {
                self.col[i] = v[i * (ny + 1) + j];
            }
            self.dct_x.apply(&mut self.col);
            for i in 0..=nx {
                v[i * (ny + 1) + j] = self.col[i];
            }
        }
    }

    /// Replace `v` by the solution of (operator) u = v.
    pub fn apply_inverse(&mut self, v: &mut [f64]) {
        let [nx, ny] = self.cells;
        debug_assert_eq!(v.len(), (nx + 1) * (ny + 1));
        // undo the half weights of the cosine eigen-relations on the input
        for j in 0..=ny {
            v[j] *= 2.0;
            v[nx * (ny + 1) + j] *= 2.0;
        }
        for i in 0..=nx {
            v[i * (ny + 1)] *= 2.0;
            v[i * (ny + 1) + ny] *= 2.0;
        }
        self.transform_both_axes(v);
        for (z, d) in v.iter_mut().zip(&self.div) {
            *z /= d;
        }
        self.transform_both_axes(v);
        let scale = 4.0 / (nx as f64 * ny as f64);
        for z in v.iter_mut() {
            *z *= scale;
        }
    }
}

/// Assembly-free shifted stiffness S_g + shift M on a uniform Q1 mesh whose
/// coefficient repeats every `periods` cells per axis: one local 4x4 matrix
/// per residue class of the cell index, applied cell by cell.
pub struct PeriodicCellOperator {
    cells: [usize; 2],
    periods: [usize; 2],
    local: Vec<[f64; 16]>,
}

impl PeriodicCellOperator {
    /// Build the table from the coefficient closure, which must satisfy
    /// g(x + periods * spacing) = g(x) along each axis. `shift` times the
    /// local mass is folded into each entry. The quadrature and coefficient
    /// symmetrization match `Q1Space::assemble`.
    pub fn new(
        space: &Q1Space,
        g: &dyn Fn(&[f64]) -> [[f64; 2]; 2],
        periods: [usize; 2],
        shift: f64,
        quad: usize,
    ) -> Result<Self> {
        if periods[0] == 0 || periods[1] == 0 {
            return Err(Error::invalid("coefficient period must be positive"));
        }
        let (nodes, weights) = gauss_legendre(quad);
        let [hx, hy] = space.spacing();
        let jac = 0.25 * hx * hy;
        let mut local = vec![[0.0f64; 16]; periods[0] * periods[1]];
        for ri in 0..periods[0] {
            let x0 = space.a[0] + ri as f64 * hx;
            for rj in 0..periods[1] {
                let y0 = space.a[1] + rj as f64 * hy;
                let dst = &mut local[ri * periods[1] + rj];
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
                        let ps = [1.0 - s, s];
                        let pt = [1.0 - t, t];
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
                                dst[4 * l1 + l2] += w
                                    * (gx[l1] * (g00 * gx[l2] + g01 * gy[l2])
                                        + gy[l1] * (g01 * gx[l2] + g11 * gy[l2])
                                        + shift * val[l1] * val[l2]);
                            }
                        }
                    }
                }
            }
        }
        Ok(PeriodicCellOperator {
            cells: space.cells,
            periods,
            local,
        })
    }

    pub fn dofs(&self) -> usize {
        (self.cells[0] + 1) * (self.cells[1] + 1)
    }

    /// out = operator * u.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let [nx, ny] = self.cells;
        let nyp = ny + 1;
        debug_assert_eq!(u.len(), (nx + 1) * nyp);
        debug_assert_eq!(out.len(), u.len());
        out.fill(0.0);
        for ci in 0..nx {
            let base = (ci % self.periods[0]) * self.periods[1];
            let row0 = ci * nyp;
            for cj in 0..ny {
                let t = &self.local[base + cj % self.periods[1]];
                let i0 = row0 + cj;
                let i1 = i0 + 1;
                let i2 = i0 + nyp;
                let i3 = i2 + 1;
                let u0 = u[i0];
                let u1 = u[i1];
                let u2 = u[i2];
                let u3 = u[i3];
                out[i0] += t[0] * u0 + t[1] * u1 + t[2] * u2 + t[3] * u3;
                out[i1] += t[4] * u0 + t[5] * u1 + t[6] * u2 + t[7] * u3;
                out[i2] += t[8] * u0 + t[9] * u1 + t[10] * u2 + t[11] * u3;
                out[i3] += t[12] * u0 + t[13] * u1 + t[14] * u2 + t[15] * u3;
            }
        }
    }
}

pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for an SPD operator, stopping on the
/// true residual: ||b - A x|| <= tol ||b||.
pub fn pcg(
    apply_a: &mut dyn FnMut(&[f64], &mut [f64]),
    apply_pinv: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PcgResult> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgResult {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    apply_pinv(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply_a(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::solver("conjugate gradients: operator lost positivity"));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok(PcgResult {
                x,
                iterations: it,
                rel_residual: res,
            });
        }
        apply_pinv(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::solver(format!(
        "conjugate gradients did not reach tolerance {tol} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neumann::q1::solve_shifted_real;

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    #[test]
    fn cosine_transform_matches_direct_sum() {
        let n = 12;
        let mut state = 7u64;
        let v: Vec<f64> = (0..=n).map(|_| splitmix(&mut state)).collect();
        let mut fast = v.clone();
        Dct1::new(n).apply(&mut fast);
        for q in 0..=n {
            let mut direct = 0.5 * v[0] + 0.5 * if q % 2 == 0 { v[n] } else { -v[n] };
            for j in 1..n {
                direct += v[j] * (PI * (q * j) as f64 / n as f64).cos();
            }
            assert!((fast[q] - direct).abs() < 1e-12, "mode {q}");
        }
        // involution up to scale: T^2 = (n / 2) id
        let mut twice = v.clone();
        let mut dct = Dct1::new(n);
        dct.apply(&mut twice);
        dct.apply(&mut twice);
        for (a, b) in twice.iter().zip(&v) {
            assert!((a - b * n as f64 / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_solver_inverts_the_assembled_operator() {
        let sp = Q1Space::new([0.0, 0.0], [1.0, 0.7], [9, 6]).unwrap();
        let g = |_: &[f64]| [[1.7, 0.0], [0.0, 0.4]];
        let (s, m) = sp.assemble(&g, 2).unwrap();
        let shift = 0.9;
        let mut state = 3u64;
        let x: Vec<f64> = (0..sp.dofs()).map(|_| splitmix(&mut state)).collect();
        let su = s.matvec(&x);
        let mu = m.matvec(&x);
        let mut y: Vec<f64> = su.iter().zip(&mu).map(|(a, b)| a + shift * b).collect();
        let mut solver = SeparableShiftSolver::new(&sp, [1.7, 0.4], shift).unwrap();
        solver.apply_inverse(&mut y);
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn periodic_table_matches_assembly() {
        // coefficient with period 1/4 on a mesh of spacing 1/16: 4 cells per period
        let g = |x: &[f64]| {
            let (sx, sy) = ((8.0 * PI * x[0]).sin(), (8.0 * PI * x[1]).sin());
            [
                [2.0 + (8.0 * PI * x[0]).cos(), 0.2 * sx * sy],
                [0.2 * sx * sy, 1.5 + 0.5 * sy],
            ]
        };
        let sp = Q1Space::new([0.0, 0.0], [0.5, 0.5], [8, 8]).unwrap();
        let shift = 1.3;
        let quad = 3;
        let (s, m) = sp.assemble(&g, quad).unwrap();
        let table = PeriodicCellOperator::new(&sp, &g, [4, 4], shift, quad).unwrap();
        let mut state = 11u64;
        let u: Vec<f64> = (0..sp.dofs()).map(|_| splitmix(&mut state)).collect();
        let su = s.matvec(&u);
        let mu = m.matvec(&u);
        let mut out = vec![0.0; sp.dofs()];
        table.apply(&u, &mut out);
        for i in 0..sp.dofs() {
            let want = su[i] + shift * mu[i];
            assert!((out[i] - want).abs() < 1e-12 * (1.0 + want.abs()), "dof {i}");
        }
    }

    #[test]
    fn pcg_agrees_with_cholesky() {
        // period 1/8 = 3 cells of the 12-cell mesh on [0, 1/2]
        let g = |x: &[f64]| {
            [
                [2.0 + (16.0 * PI * x[0]).cos(), 0.0],
                [0.0, 1.5 + 0.5 * (16.0 * PI * x[1]).sin()],
            ]
        };
        let sp = Q1Space::new([0.0, 0.0], [0.5, 0.5], [12, 12]).unwrap();
        let shift = 1.0;
        let table = PeriodicCellOperator::new(&sp, &g, [3, 3], shift, 2).unwrap();
        let load = sp.load_vector(&|x| (2.0 * PI * x[0]).cos() + x[1], 2);
        let mut pre = SeparableShiftSolver::new(&sp, [2.0, 1.5], shift).unwrap();
        let out = pcg(
            &mut |u, out| table.apply(u, out),
            &mut |r, out| {
                out.copy_from_slice(r);
                pre.apply_inverse(out);
            },
            &load,
            1e-12,
            200,
        )
        .unwrap();
        let (s, m) = sp.assemble(&g, 2).unwrap();
        let direct = solve_shifted_real(&s, &m, -shift, &load).unwrap();
        for (a, b) in out.x.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(out.iterations < 60, "took {} iterations", out.iterations);
    }
}
