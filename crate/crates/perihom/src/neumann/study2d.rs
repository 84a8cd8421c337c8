//! Convergence study for the Neumann resolvent of a second-order system in
//! two dimensions: -div g(x/eps) grad on the square [0, 1/2]^2 with natural
//! boundary conditions, embedded in the unit torus.
//!
//! The oscillatory and the effective problem are both solved with Q1
//! elements on one mesh whose spacing divides the period, so the
//! oscillatory stiffness reduces to a table of local matrices and the
//! systems solve by conjugate gradients preconditioned with the exact
//! inverse of the separable effective operator. Errors are measured by the
//! midpoint rule on the mesh cells, which are also cells of the torus
//! lattice carrying the corrector fields: the first-order term
//!
//!     K_N = eps Lambda(x/eps) . S_eps grad(E u0)
//!
//! combines exact midpoint values of Lambda (zero-padded spectral
//! evaluation, one residue table per axis period) with the smoothed,
//! extended effective gradient sampled spectrally on the torus grid. Mesh
//! adequacy is guarded by the density-stability test rather than a refined
//! reference, which would dominate the runtime in two dimensions.

use crate::cell::{self, EffectiveData, SpecialCase};
use crate::coefficient::{random_gram_expr, CoefficientG, GExpr};
use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::lattice::Lattice;
use crate::neumann::extension::ExtensionBox;
use crate::neumann::fast2d::{pcg, PeriodicCellOperator, SeparableShiftSolver};
use crate::neumann::measure::MeasurementGrid;
use crate::neumann::q1::Q1Space;
use crate::symbol::{MultiIndex, Symbol};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct NeumannConfig2d {
    /// 2 x 2 Hermitian positive-definite coefficient on the unit cell
    pub g_expr: GExpr,
    pub cell: Lattice,
    /// eps = 1 / k for each k (even, so the domain holds whole periods)
    pub k_list: Vec<usize>,
    /// negative real shift of the resolvent
    pub zeta: f64,
    /// mesh cells per period of g(x/eps), per axis
    pub cells_per_period: usize,
    /// modes per side of the corrector cell solve
    pub cell_cutoff: usize,
    pub quad_pts: usize,
    pub pcg_tol: f64,
    pub pcg_max_iter: usize,
}

impl NeumannConfig2d {
    /// A generic random coefficient: real symmetric Gram form with one
    /// harmonic band, so the corrector problem has no special structure.
    pub fn generic(seed: u64, k_list: Vec<usize>) -> Result<Self> {
        let cell = Lattice::unit(2);
        let g_expr = random_gram_expr(2, 2, 1, 3.0, seed, true, &cell)?;
        Ok(NeumannConfig2d {
            g_expr,
            cell,
            k_list,
            zeta: -1.0,
            cells_per_period: 64,
            cell_cutoff: 16,
            quad_pts: 3,
            pcg_tol: 1e-9,
            pcg_max_iter: 500,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Neumann2dRecord {
    pub eps: f64,
    /// L2 gap between the oscillatory and effective solutions
    pub e_l2: f64,
    /// H^1 gap without corrector
    pub e_hp_plain: f64,
    /// H^1 gap after adding K_N
    pub e_hp_corr: f64,
    /// conjugate-gradient iterations (oscillatory, effective)
    pub iterations: (usize, usize),
}

#[derive(Debug)]
pub struct Neumann2dStudy {
    pub zeta: f64,
    /// real part of the effective matrix
    pub g0: [[f64; 2]; 2],
    pub case: SpecialCase,
    pub cell_data: EffectiveData,
    pub records: Vec<Neumann2dRecord>,
}

/// A smooth generic load with a nonconstant effective gradient.
pub fn generic_load(x: &[f64]) -> f64 {
    (2.0 * PI * x[0]).cos() * (1.0 + 0.5 * (2.0 * PI * x[1]).sin()) + 3.0 * x[0] - x[1]
}

/// Midpoint values of one component of a torus field at the residue points
/// ((r + 1/2) / cp) per axis: the field is zero-padded to a grid holding
/// those midpoints as nodes, which evaluates its trigonometric interpolant
/// exactly.
fn residue_midpoints(field: &PeriodicField, c: usize, cp: usize) -> Result<Vec<Complex64>> {
    let need = 2 * cp;
    let target: Vec<usize> = field
        .dims
        .iter()
        .map(|&n| need * n.div_ceil(need))
        .collect();
    let padded = field.pad_to(&target)?;
    let vals = padded.values_of(0, c);
    let sx = target[0] / need;
    let sy = target[1] / need;
    let mut out = Vec::with_capacity(cp * cp);
    for ri in 0..cp {
        for rj in 0..cp {
            out.push(vals[(2 * ri + 1) * sx * target[1] + (2 * rj + 1) * sy]);
        }
    }
    Ok(out)
}

pub fn neumann_error_study_2d(
    cfg: &NeumannConfig2d,
    rhs: &dyn Fn(&[f64]) -> f64,
) -> Result<Neumann2dStudy> {
    if cfg.cell.dim() != 2 {
        return Err(Error::invalid("two-dimensional study needs a planar cell"));
    }
    if !(cfg.zeta < 0.0) {
        return Err(Error::invalid(
            "conjugate-gradient path needs a negative real shift",
        ));
    }
    if cfg.k_list.is_empty() || cfg.k_list.iter().any(|&k| k < 2 || k % 2 != 0) {
        return Err(Error::invalid("period counts must be even and at least 2"));
    }
    if cfg.cells_per_period < 4 {
        return Err(Error::invalid("need at least 4 mesh cells per period"));
    }
    // the real-arithmetic finite-element path drops imaginary parts, so
    // insist the coefficient really is real symmetric before using it
    for t in 0..64usize {
        let x = [
            (t % 8) as f64 / 8.0 * cfg.cell.lengths()[0],
            (t / 8) as f64 / 8.0 * cfg.cell.lengths()[1],
        ];
        let v = cfg.g_expr.eval(&cfg.cell, &x);
        let imag = v.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        let skew = (v[(0, 1)] - v[(1, 0)].conj()).norm();
        if imag > 1e-10 || skew > 1e-10 {
            return Err(Error::unsupported(
                "bounded-domain study needs a real symmetric coefficient",
            ));
        }
    }

    let b = Symbol::gradient(2);
    let cp = cfg.cells_per_period;
    let shift = -cfg.zeta;

    // corrector and effective matrix from the cell problem
    let dims_cell = vec![2 * cfg.cell_cutoff; 2];
    let g = CoefficientG::from_expr(cfg.g_expr.clone(), cfg.cell.clone(), &dims_cell)?;
    let data = cell::solve_cell_problem(&g, &b, cfg.cell_cutoff, cell::DEFAULT_CELL_TOL)?;
    let g0 = [
        [data.g0[(0, 0)].re, data.g0[(0, 1)].re],
        [data.g0[(1, 0)].re, data.g0[(1, 1)].re],
    ];
    let case = data.case;

    // midpoint residue tables of Lambda = (Lambda_1, Lambda_2) and its
    // partial derivatives; one entry per residue class of the mesh cell
    let mut lam_mid: Vec<Vec<Complex64>> = Vec::with_capacity(2);
    let mut dlam_mid: Vec<Vec<Vec<Complex64>>> = vec![Vec::with_capacity(2); 2];
    for c in 0..2 {
        lam_mid.push(residue_midpoints(&data.lambda, c, cp)?);
        for (axis, store) in dlam_mid.iter_mut().enumerate() {
            let mut beta = vec![0usize; 2];
            beta[axis] = 1;
            let derived = data.lambda.derivative_partial(&MultiIndex(beta))?;
            store.push(residue_midpoints(&derived, c, cp)?);
        }
    }

    let torus = Lattice::unit(2);
    let domain_b = [0.5, 0.5];
    let ext = ExtensionBox::new(&[0.0, 0.0], &domain_b, &[1.0, 1.0], 1)?;
    let g_diag = [g0[0][0], g0[1][1]];
    let g0_closure = move |_: &[f64]| g0;

    let mut records = Vec::with_capacity(cfg.k_list.len());
    for &k in &cfg.k_list {
        let eps = 1.0 / k as f64;
        let n_cells = cp * k / 2;
        let mesh = Q1Space::new([0.0, 0.0], domain_b, [n_cells, n_cells])?;
        let load = mesh.load_vector(rhs, cfg.quad_pts);
        let mut pre = SeparableShiftSolver::new(&mesh, g_diag, shift)?;

        let cell_lat = cfg.cell.clone();
        let expr = cfg.g_expr.clone();
        let g_eps = move |x: &[f64]| {
            let m = expr.eval_scaled(&cell_lat, x, eps);
            [[m[(0, 0)].re, m[(0, 1)].re], [m[(1, 0)].re, m[(1, 1)].re]]
        };
        let table_eps = PeriodicCellOperator::new(&mesh, &g_eps, [cp, cp], shift, cfg.quad_pts)?;
        let osc = pcg(
            &mut |u, out| table_eps.apply(u, out),
            &mut |r, out| {
                out.copy_from_slice(r);
                pre.apply_inverse(out);
            },
            &load,
            cfg.pcg_tol,
            cfg.pcg_max_iter,
        )?;
        drop(table_eps);

        let table_eff = PeriodicCellOperator::new(&mesh, &g0_closure, [1, 1], shift, cfg.quad_pts)?;
        let eff = pcg(
            &mut |u, out| table_eff.apply(u, out),
            &mut |r, out| {
                out.copy_from_slice(r);
                pre.apply_inverse(out);
            },
            &load,
            cfg.pcg_tol,
            cfg.pcg_max_iter,
        )?;
        drop(table_eff);

        // smoothed gradient of the extended effective solution on the torus
        let nt = cp * k;
        let dims_t = [nt, nt];
        let u_eff = eff.x.clone();
        let mesh_ref = &mesh;
        let point_eval =
            move |x: &[f64]| Complex64::new(mesh_ref.eval(&u_eff, x), 0.0);
        let mut values = vec![Complex64::default(); nt * nt];
        for i in 0..nt {
            let x0 = i as f64 / nt as f64;
            for j in 0..nt {
                let x1 = j as f64 / nt as f64;
                values[i * nt + j] = ext.eval(&point_eval, &[x0, x1]);
            }
        }
        let eu0 = PeriodicField::from_values(torus.clone(), 1, 1, &dims_t, values)?;
        let w_raw = eu0.apply_symbol(&b)?;
        drop(eu0);
        let w = w_raw.apply_steklov(eps);
        drop(w_raw);

        let grid = MeasurementGrid::new(&torus, &dims_t, &[0.0, 0.0], &domain_b)?;
        let mut w_mid = Vec::with_capacity(2);
        let mut dw_mid: Vec<Vec<Vec<Complex64>>> = vec![Vec::with_capacity(2); 2];
        for r in 0..2 {
            w_mid.push(grid.sample_field(&w, r, 0, None)?);
            for (axis, store) in dw_mid.iter_mut().enumerate() {
                let mut beta = vec![0usize; 2];
                beta[axis] = 1;
                store.push(grid.sample_field(&w, r, 0, Some(&MultiIndex(beta)))?);
            }
        }
        drop(w);

        // midpoint-rule error norms over the mesh cells
        let h = 0.5 / n_cells as f64;
        let vol = h * h;
        let mut acc_l2 = 0.0f64;
        let mut acc_plain = 0.0f64;
        let mut acc_corr = 0.0f64;
        for ci in 0..n_cells {
            let x0 = (ci as f64 + 0.5) * h;
            let res_i = (ci % cp) * cp;
            for cj in 0..n_cells {
                let x1 = (cj as f64 + 0.5) * h;
                let res = res_i + cj % cp;
                let flat = ci * n_cells + cj;
                let pt = [x0, x1];
                let ue = mesh.eval(&osc.x, &pt);
                let u0 = mesh.eval(&eff.x, &pt);
                let ge = mesh.gradient(&osc.x, &pt);
                let g0v = mesh.gradient(&eff.x, &pt);
                let dv = ue - u0;
                let dx = ge[0] - g0v[0];
                let dy = ge[1] - g0v[1];
                acc_l2 += dv * dv;
                acc_plain += dv * dv + dx * dx + dy * dy;
                let mut kn = Complex64::default();
                let mut kn_dx = Complex64::default();
                let mut kn_dy = Complex64::default();
                for c in 0..2 {
                    let lam = lam_mid[c][res];
                    let wc = w_mid[c][flat];
                    kn += eps * lam * wc;
                    kn_dx += dlam_mid[0][c][res] * wc + eps * lam * dw_mid[0][c][flat];
                    kn_dy += dlam_mid[1][c][res] * wc + eps * lam * dw_mid[1][c][flat];
                }
                acc_corr += (dv - kn).norm_sqr()
                    + (dx - kn_dx).norm_sqr()
                    + (dy - kn_dy).norm_sqr();
            }
        }
        records.push(Neumann2dRecord {
            eps,
            e_l2: (vol * acc_l2).sqrt(),
            e_hp_plain: (vol * acc_plain).sqrt(),
            e_hp_corr: (vol * acc_corr).sqrt(),
            iterations: (osc.iterations, eff.iterations),
        });
    }

    Ok(Neumann2dStudy {
        zeta: cfg.zeta,
        g0,
        case,
        cell_data: data,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrector_improves_the_gradient_error() {
        let mut cfg = NeumannConfig2d::generic(21, vec![4, 8]).unwrap();
        cfg.cells_per_period = 16;
        cfg.cell_cutoff = 8;
        cfg.quad_pts = 2;
        let study = neumann_error_study_2d(&cfg, &generic_load).unwrap();
        assert_eq!(study.case, SpecialCase::Generic);
        assert_eq!(study.records.len(), 2);
        let [r0, r1] = [&study.records[0], &study.records[1]];
        assert!(r1.e_l2 < 0.7 * r0.e_l2, "L2 gaps {} {}", r0.e_l2, r1.e_l2);
        for r in &study.records {
            assert!(
                r.e_hp_corr < 0.7 * r.e_hp_plain,
                "eps {}: corrected {} plain {}",
                r.eps,
                r.e_hp_corr,
                r.e_hp_plain
            );
        }
        // effective matrix is symmetric positive definite and genuinely 2x2
        assert!((study.g0[0][1] - study.g0[1][0]).abs() < 1e-10);
        assert!(study.g0[0][0] > 1.0 && study.g0[1][1] > 1.0);
    }

    #[test]
    fn errors_are_stable_under_mesh_refinement() {
        // doubling the mesh density at fixed eps must not move the measured
        // homogenization errors much, or the mesh would be under-resolved
        let mut coarse = NeumannConfig2d::generic(33, vec![4]).unwrap();
        coarse.cells_per_period = 16;
        coarse.cell_cutoff = 8;
        coarse.quad_pts = 2;
        let mut fine = coarse.clone();
        fine.cells_per_period = 32;
        let a = &neumann_error_study_2d(&coarse, &generic_load).unwrap().records[0];
        let b = &neumann_error_study_2d(&fine, &generic_load).unwrap().records[0];
        assert!(
            (a.e_hp_plain - b.e_hp_plain).abs() < 0.1 * b.e_hp_plain,
            "plain {} vs {}",
            a.e_hp_plain,
            b.e_hp_plain
        );
        assert!(
            (a.e_hp_corr - b.e_hp_corr).abs() < 0.3 * b.e_hp_corr,
            "corrected {} vs {}",
            a.e_hp_corr,
            b.e_hp_corr
        );
    }
}
