//! Matrix-valued trigonometric fields on a rectangular torus.
//!
//! A `PeriodicField` holds a rows x cols matrix of trigonometric polynomials
//! through both representations at once: Fourier coefficients in FFT index
//! order and nodal values on the uniform grid x_t = t L / n, kept consistent
//! by construction. Grids have even sizes per axis; differentiation-type
//! multipliers zero the Nyquist mode, which has no conjugate partner on an
//! even grid.
//!
//! Layout is component-major: component (r, c) owns a contiguous row-major
//! spatial tensor, so per-component FFTs need no strides across components.

use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::Lattice;
use crate::linalg::CMat;
use crate::symbol::{multi_indices_up_to, MultiIndex, Symbol};
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct PeriodicField {
    pub lattice: Lattice,
    pub rows: usize,
    pub cols: usize,
    pub dims: Vec<usize>,
    coeffs: Vec<Complex64>,
    values: Vec<Complex64>,
}

fn check_dims(lattice: &Lattice, dims: &[usize]) -> Result<()> {
    if dims.len() != lattice.dim() {
        return Err(Error::invalid("grid dimension does not match the lattice"));
    }
    if dims.iter().any(|&n| n == 0 || n % 2 != 0) {
        return Err(Error::invalid("grid sizes must be positive and even"));
    }
    Ok(())
}

/// Per-axis frequency table in FFT index order.
fn xi_table(lattice: &Lattice, dims: &[usize]) -> Vec<Vec<f64>> {
    dims.iter()
        .enumerate()
        .map(|(axis, &n)| {
            fft::signed_modes(n)
                .into_iter()
                .map(|k| 2.0 * std::f64::consts::PI * k as f64 / lattice.lengths()[axis])
                .collect()
        })
        .collect()
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let d = dims.len();
    let mut s = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

impl PeriodicField {
    pub fn spatial_len(&self) -> usize {
        self.dims.iter().product()
    }

    fn comp(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols);
        (r * self.cols + c) * self.spatial_len()
    }

    pub fn coeffs_of(&self, r: usize, c: usize) -> &[Complex64] {
        let o = self.comp(r, c);
        &self.coeffs[o..o + self.spatial_len()]
    }

    pub fn values_of(&self, r: usize, c: usize) -> &[Complex64] {
        let o = self.comp(r, c);
        &self.values[o..o + self.spatial_len()]
    }

    pub fn raw_coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn from_values(
        lattice: Lattice,
        rows: usize,
        cols: usize,
        dims: &[usize],
        values: Vec<Complex64>,
    ) -> Result<Self> {
        check_dims(&lattice, dims)?;
        let n: usize = dims.iter().product();
        if values.len() != rows * cols * n {
            return Err(Error::invalid("value buffer length mismatch"));
        }
        let mut coeffs = values.clone();
        for rc in 0..rows * cols {
            fft::forward(&mut coeffs[rc * n..(rc + 1) * n], dims);
        }
        Ok(PeriodicField {
            lattice,
            rows,
            cols,
            dims: dims.to_vec(),
            coeffs,
            values,
        })
    }

    pub fn from_coeffs(
        lattice: Lattice,
        rows: usize,
        cols: usize,
        dims: &[usize],
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        check_dims(&lattice, dims)?;
        let n: usize = dims.iter().product();
        if coeffs.len() != rows * cols * n {
            return Err(Error::invalid("coefficient buffer length mismatch"));
        }
        let mut values = coeffs.clone();
        for rc in 0..rows * cols {
            fft::inverse(&mut values[rc * n..(rc + 1) * n], dims);
        }
        Ok(PeriodicField {
            lattice,
            rows,
            cols,
            dims: dims.to_vec(),
            coeffs,
            values,
        })
    }

    pub fn zeros(lattice: Lattice, rows: usize, cols: usize, dims: &[usize]) -> Result<Self> {
        check_dims(&lattice, dims)?;
        let n: usize = dims.iter().product();
        Ok(PeriodicField {
            lattice,
            rows,
            cols,
            dims: dims.to_vec(),
            coeffs: vec![Complex64::default(); rows * cols * n],
            values: vec![Complex64::default(); rows * cols * n],
        })
    }

    pub fn constant(lattice: Lattice, value: &CMat, dims: &[usize]) -> Result<Self> {
        let mut f = Self::zeros(lattice, value.nrows(), value.ncols(), dims)?;
        let n = f.spatial_len();
        for r in 0..f.rows {
            for c in 0..f.cols {
                let o = (r * f.cols + c) * n;
                f.coeffs[o] = value[(r, c)];
                for t in 0..n {
                    f.values[o + t] = value[(r, c)];
                }
            }
        }
        Ok(f)
    }

    /// Sample a closed-form matrix function on the nodal grid.
    pub fn from_fn(
        lattice: Lattice,
        rows: usize,
        cols: usize,
        dims: &[usize],
        f: impl Fn(&[f64]) -> CMat,
    ) -> Result<Self> {
        check_dims(&lattice, dims)?;
        let n: usize = dims.iter().product();
        let st = strides(dims);
        let d = dims.len();
        let mut values = vec![Complex64::default(); rows * cols * n];
        let mut x = vec![0.0; d];
        for t in 0..n {
            for a in 0..d {
                let idx = (t / st[a]) % dims[a];
                x[a] = idx as f64 * lattice.lengths()[a] / dims[a] as f64;
            }
            let m = f(&x);
            assert_eq!((m.nrows(), m.ncols()), (rows, cols));
            for r in 0..rows {
                for c in 0..cols {
                    values[(r * cols + c) * n + t] = m[(r, c)];
                }
            }
        }
        Self::from_values(lattice, rows, cols, dims, values)
    }

    /// Matrix value at a flat spatial index.
    pub fn value_matrix(&self, t: usize) -> CMat {
        let n = self.spatial_len();
        CMat::from_fn(self.rows, self.cols, |r, c| {
            self.values[(r * self.cols + c) * n + t]
        })
    }

    /// Coefficient matrix of an integer mode (each |k_j| <= n_j/2, the
    /// Nyquist row only at -n_j/2).
    pub fn coeff_matrix(&self, k: &[i64]) -> CMat {
        let n = self.spatial_len();
        let st = strides(&self.dims);
        let mut flat = 0usize;
        for (a, &kj) in k.iter().enumerate() {
            let na = self.dims[a] as i64;
            debug_assert!(kj >= -na / 2 && kj < na / 2 || kj == -na / 2);
            let idx = kj.rem_euclid(na) as usize;
            flat += idx * st[a];
        }
        CMat::from_fn(self.rows, self.cols, |r, c| {
            self.coeffs[(r * self.cols + c) * n + flat]
        })
    }

    pub fn mean(&self) -> CMat {
        let n = self.spatial_len();
        CMat::from_fn(self.rows, self.cols, |r, c| {
            self.coeffs[(r * self.cols + c) * n]
        })
    }

    pub fn zero_mean(&self) -> Self {
        let mut out = self.clone();
        let n = self.spatial_len();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let o = (r * self.cols + c) * n;
                let m = out.coeffs[o];
                out.coeffs[o] = Complex64::default();
                for t in 0..n {
                    out.values[o + t] -= m;
                }
            }
        }
        out
    }

    /// Largest relative deviation between stored values and the inverse
    /// transform of stored coefficients. Zero by construction up to FFT
    /// roundoff; used to assert the representation invariant.
    pub fn consistency_defect(&self) -> f64 {
        let n = self.spatial_len();
        let mut worst = 0.0f64;
        let scale = self
            .values
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        for rc in 0..self.rows * self.cols {
            let mut buf = self.coeffs[rc * n..(rc + 1) * n].to_vec();
            fft::inverse(&mut buf, &self.dims);
            for (a, b) in buf.iter().zip(&self.values[rc * n..(rc + 1) * n]) {
                worst = worst.max((a - b).norm() / scale);
            }
        }
        worst
    }

    /// Apply a mode multiplier w(xi) to every component.
    fn apply_scalar_multiplier(
        &self,
        w: impl Fn(&[f64]) -> Complex64,
        zero_nyquist: bool,
    ) -> Self {
        let n = self.spatial_len();
        let d = self.dims.len();
        let st = strides(&self.dims);
        let xt = xi_table(&self.lattice, &self.dims);
        let mut table = vec![Complex64::default(); n];
        let mut xi = vec![0.0; d];
        for t in 0..n {
            let mut nyq = false;
            for a in 0..d {
                let idx = (t / st[a]) % self.dims[a];
                if idx == self.dims[a] / 2 {
                    nyq = true;
                }
                xi[a] = xt[a][idx];
            }
            table[t] = if nyq && zero_nyquist {
                Complex64::default()
            } else {
                w(&xi)
            };
        }
        let mut coeffs = self.coeffs.clone();
        for rc in 0..self.rows * self.cols {
            for t in 0..n {
                coeffs[rc * n + t] *= table[t];
            }
        }
        PeriodicField::from_coeffs(self.lattice.clone(), self.rows, self.cols, &self.dims, coeffs)
            .expect("dims already validated")
    }

    /// b(D) u: per mode multiply the coefficient columns by b(xi).
    /// Requires rows == b.n; the output has b.m rows.
    pub fn apply_symbol(&self, b: &Symbol) -> Result<Self> {
        if self.rows != b.n {
            return Err(Error::invalid(format!(
                "apply_symbol: field has {} rows, symbol consumes {}",
                self.rows, b.n
            )));
        }
        self.apply_block_multiplier(b.m, |xi| b.eval_real(xi))
    }

    /// b(D)^* v: per mode multiply by b(xi)^H. Requires rows == b.m.
    pub fn apply_symbol_adjoint(&self, b: &Symbol) -> Result<Self> {
        if self.rows != b.m {
            return Err(Error::invalid(format!(
                "apply_symbol_adjoint: field has {} rows, symbol produces {}",
                self.rows, b.m
            )));
        }
        self.apply_block_multiplier(b.n, |xi| b.eval_real(xi).adjoint())
    }

    /// Generic block multiplier out(xi) = B(xi) u(xi); zeroes Nyquist modes.
    fn apply_block_multiplier(
        &self,
        out_rows: usize,
        block: impl Fn(&[f64]) -> CMat,
    ) -> Result<Self> {
        let n = self.spatial_len();
        let d = self.dims.len();
        let st = strides(&self.dims);
        let xt = xi_table(&self.lattice, &self.dims);
        let mut coeffs = vec![Complex64::default(); out_rows * self.cols * n];
        let mut xi = vec![0.0; d];
        for t in 0..n {
            let mut nyq = false;
            for a in 0..d {
                let idx = (t / st[a]) % self.dims[a];
                if idx == self.dims[a] / 2 {
                    nyq = true;
                }
                xi[a] = xt[a][idx];
            }
            if nyq {
                continue;
            }
            let bm = block(&xi);
            debug_assert_eq!(bm.nrows(), out_rows);
            debug_assert_eq!(bm.ncols(), self.rows);
            for c in 0..self.cols {
                for ro in 0..out_rows {
                    let mut acc = Complex64::default();
                    for ri in 0..self.rows {
                        acc += bm[(ro, ri)] * self.coeffs[(ri * self.cols + c) * n + t];
                    }
                    coeffs[(ro * self.cols + c) * n + t] = acc;
                }
            }
        }
        PeriodicField::from_coeffs(self.lattice.clone(), out_rows, self.cols, &self.dims, coeffs)
    }

    /// D^beta u (multiplier xi^beta).
    pub fn derivative_d(&self, beta: &MultiIndex) -> Result<Self> {
        if beta.dim() != self.dims.len() {
            return Err(Error::invalid("derivative multi-index dimension mismatch"));
        }
        let beta = beta.clone();
        Ok(self.apply_scalar_multiplier(
            move |xi| Complex64::new(beta.pow_real(xi), 0.0),
            true,
        ))
    }

    /// partial^beta u (multiplier (i xi)^beta).
    pub fn derivative_partial(&self, beta: &MultiIndex) -> Result<Self> {
        if beta.dim() != self.dims.len() {
            return Err(Error::invalid("derivative multi-index dimension mismatch"));
        }
        let beta = beta.clone();
        let order = beta.order() as u32;
        Ok(self.apply_scalar_multiplier(
            move |xi| Complex64::i().powu(order) * beta.pow_real(xi),
            true,
        ))
    }

    pub fn apply_steklov(&self, eps: f64) -> Self {
        let lat = self.lattice.clone();
        self.apply_scalar_multiplier(
            move |xi| Complex64::new(steklov_multiplier(&lat, eps, xi), 0.0),
            false,
        )
    }

    /// Pointwise matrix product with another field on the same grid.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.lattice != rhs.lattice || self.dims != rhs.dims {
            return Err(Error::invalid("matmul: fields live on different grids"));
        }
        if self.cols != rhs.rows {
            return Err(Error::invalid(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let n = self.spatial_len();
        let (ro, co, k) = (self.rows, rhs.cols, self.cols);
        let mut values = vec![Complex64::default(); ro * co * n];
        for r in 0..ro {
            for c in 0..co {
                let out = &mut values[(r * co + c) * n..(r * co + c + 1) * n];
                for s in 0..k {
                    let a = &self.values[(r * k + s) * n..(r * k + s + 1) * n];
                    let b = &rhs.values[(s * co + c) * n..(s * co + c + 1) * n];
                    for t in 0..n {
                        out[t] += a[t] * b[t];
                    }
                }
            }
        }
        PeriodicField::from_values(self.lattice.clone(), ro, co, &self.dims, values)
    }

    /// Alias-free pointwise product: both factors are zero-padded onto a
    /// grid holding the full product band, then multiplied nodally. Exact
    /// for trigonometric polynomials.
    pub fn matmul_exact(&self, rhs: &Self) -> Result<Self> {
        if self.lattice != rhs.lattice {
            return Err(Error::invalid("matmul_exact: different lattices"));
        }
        let target: Vec<usize> = self
            .dims
            .iter()
            .zip(&rhs.dims)
            .map(|(&a, &b)| a + b)
            .collect();
        let a = self.pad_to(&target)?;
        let b = rhs.pad_to(&target)?;
        a.matmul(&b)
    }

    /// Zero-pad the coefficient array onto a finer grid (same lattice):
    /// the same trigonometric polynomial sampled more finely.
    pub fn pad_to(&self, target: &[usize]) -> Result<Self> {
        check_dims(&self.lattice, target)?;
        if target.iter().zip(&self.dims).any(|(&t, &s)| t < s) {
            return Err(Error::invalid("pad_to: target grid is coarser"));
        }
        if target == self.dims.as_slice() {
            return Ok(self.clone());
        }
        let n_src: usize = self.spatial_len();
        let n_dst: usize = target.iter().product();
        let st_src = strides(&self.dims);
        let st_dst = strides(target);
        let d = self.dims.len();
        let mut coeffs = vec![Complex64::default(); self.rows * self.cols * n_dst];
        for rc in 0..self.rows * self.cols {
            for t in 0..n_src {
                let mut dst = 0usize;
                for a in 0..d {
                    let idx = (t / st_src[a]) % self.dims[a];
                    let k = if idx < self.dims[a] / 2 {
                        idx as i64
                    } else {
                        idx as i64 - self.dims[a] as i64
                    };
                    dst += (k.rem_euclid(target[a] as i64) as usize) * st_dst[a];
                }
                coeffs[rc * n_dst + dst] = self.coeffs[rc * n_src + t];
            }
        }
        PeriodicField::from_coeffs(self.lattice.clone(), self.rows, self.cols, target, coeffs)
    }

    /// The field x -> u(x / eps) for eps = 1/k: mode q moves to mode k q on
    /// a grid refined by the same factor, so nothing aliases.
    pub fn rescale_to_eps(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("rescale factor must be positive"));
        }
        let target: Vec<usize> = self.dims.iter().map(|&nj| nj * k).collect();
        let n_src = self.spatial_len();
        let n_dst: usize = target.iter().product();
        let st_src = strides(&self.dims);
        let st_dst = strides(&target);
        let d = self.dims.len();
        let mut coeffs = vec![Complex64::default(); self.rows * self.cols * n_dst];
        for rc in 0..self.rows * self.cols {
            for t in 0..n_src {
                let mut dst = 0usize;
                for a in 0..d {
                    let idx = (t / st_src[a]) % self.dims[a];
                    let q = if idx < self.dims[a] / 2 {
                        idx as i64
                    } else {
                        idx as i64 - self.dims[a] as i64
                    };
                    let m = q * k as i64;
                    dst += (m.rem_euclid(target[a] as i64) as usize) * st_dst[a];
                }
                coeffs[rc * n_dst + dst] = self.coeffs[rc * n_src + t];
            }
        }
        PeriodicField::from_coeffs(self.lattice.clone(), self.rows, self.cols, &target, coeffs)
    }

    /// Embed x -> u(x / eps), eps = 1/k, onto an enclosing torus whose side
    /// lengths are integer multiples of this lattice's. Mode q maps to
    /// k q (T_j / L_j); the target grid must hold every mapped mode strictly
    /// below its Nyquist row.
    pub fn embed_rescaled(&self, k: usize, torus: &Lattice, target: &[usize]) -> Result<Self> {
        check_dims(torus, target)?;
        if k == 0 {
            return Err(Error::invalid("rescale factor must be positive"));
        }
        let d = self.dims.len();
        if torus.dim() != d {
            return Err(Error::invalid("embedding torus dimension mismatch"));
        }
        let mut ratio = vec![0i64; d];
        for a in 0..d {
            let r = torus.lengths()[a] / self.lattice.lengths()[a];
            if (r - r.round()).abs() > 1e-9 * r.abs() || r < 1.0 {
                return Err(Error::invalid(
                    "embedding torus sides must be integer multiples of the cell",
                ));
            }
            ratio[a] = r.round() as i64;
        }
        let n_src = self.spatial_len();
        let n_dst: usize = target.iter().product();
        let st_src = strides(&self.dims);
        let st_dst = strides(target);
        let mut coeffs = vec![Complex64::default(); self.rows * self.cols * n_dst];
        for rc in 0..self.rows * self.cols {
            for t in 0..n_src {
                let mut dst = 0usize;
                for a in 0..d {
                    let idx = (t / st_src[a]) % self.dims[a];
                    let q = if idx < self.dims[a] / 2 {
                        idx as i64
                    } else {
                        idx as i64 - self.dims[a] as i64
                    };
                    let m = q * k as i64 * ratio[a];
                    if m.abs() >= target[a] as i64 / 2 && !(m == 0) {
                        if self.coeffs[rc * n_src + t].norm() > 0.0 {
                            return Err(Error::invalid(
                                "embed_rescaled: target grid too coarse for the mapped band",
                            ));
                        }
                        dst = usize::MAX;
                        break;
                    }
                    dst += (m.rem_euclid(target[a] as i64) as usize) * st_dst[a];
                }
                if dst != usize::MAX {
                    coeffs[rc * n_dst + dst] = self.coeffs[rc * n_src + t];
                }
            }
        }
        PeriodicField::from_coeffs(torus.clone(), self.rows, self.cols, target, coeffs)
    }

    /// Like [`embed_rescaled`](Self::embed_rescaled), but modes mapped onto
    /// or past the target Nyquist row are dropped instead of rejected.
    /// Returns the embedded field together with the relative L2 energy of
    /// the dropped tail, so callers can guard against lossy embeddings.
    pub fn embed_rescaled_truncating(
        &self,
        k: usize,
        torus: &Lattice,
        target: &[usize],
    ) -> Result<(Self, f64)> {
        check_dims(torus, target)?;
        if k == 0 {
            return Err(Error::invalid("rescale factor must be positive"));
        }
        let d = self.dims.len();
        if torus.dim() != d {
            return Err(Error::invalid("embedding torus dimension mismatch"));
        }
        let mut ratio = vec![0i64; d];
        for a in 0..d {
            let r = torus.lengths()[a] / self.lattice.lengths()[a];
            if (r - r.round()).abs() > 1e-9 * r.abs() || r < 1.0 {
                return Err(Error::invalid(
                    "embedding torus sides must be integer multiples of the cell",
                ));
            }
            ratio[a] = r.round() as i64;
        }
        let n_src = self.spatial_len();
        let n_dst: usize = target.iter().product();
        let st_src = strides(&self.dims);
        let st_dst = strides(target);
        let mut coeffs = vec![Complex64::default(); self.rows * self.cols * n_dst];
        let mut kept = 0.0f64;
        let mut dropped = 0.0f64;
        for rc in 0..self.rows * self.cols {
            for t in 0..n_src {
                let amp = self.coeffs[rc * n_src + t].norm_sqr();
                let mut dst = 0usize;
                for a in 0..d {
                    let idx = (t / st_src[a]) % self.dims[a];
                    let q = if idx < self.dims[a] / 2 {
                        idx as i64
                    } else {
                        idx as i64 - self.dims[a] as i64
                    };
                    let m = q * k as i64 * ratio[a];
                    if m != 0 && m.abs() >= target[a] as i64 / 2 {
                        dst = usize::MAX;
                        break;
                    }
                    dst += (m.rem_euclid(target[a] as i64) as usize) * st_dst[a];
                }
                if dst == usize::MAX {
                    dropped += amp;
                } else {
                    kept += amp;
                    coeffs[rc * n_dst + dst] = self.coeffs[rc * n_src + t];
                }
            }
        }
        let total = kept + dropped;
        let loss = if total > 0.0 { (dropped / total).sqrt() } else { 0.0 };
        let field =
            PeriodicField::from_coeffs(torus.clone(), self.rows, self.cols, target, coeffs)?;
        Ok((field, loss))
    }

    /// Sobolev norm with the (1 + |xi|^2)^s mode weight, all components
    /// summed in the Frobenius sense.
    pub fn norm_hs(&self, s: i32) -> f64 {
        let n = self.spatial_len();
        let d = self.dims.len();
        let st = strides(&self.dims);
        let xt = xi_table(&self.lattice, &self.dims);
        let vol = self.lattice.cell_volume();
        let mut acc = 0.0f64;
        for t in 0..n {
            let mut xi2 = 0.0;
            for a in 0..d {
                let v = xt[a][(t / st[a]) % self.dims[a]];
                xi2 += v * v;
            }
            let w = (1.0 + xi2).powi(s);
            let mut amp = 0.0;
            for rc in 0..self.rows * self.cols {
                amp += self.coeffs[rc * n + t].norm_sqr();
            }
            acc += w * amp;
        }
        (vol * acc).sqrt()
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_hs(0)
    }

    /// First-order seminorm (sum_j ||D_j u||^2)^{1/2}.
    pub fn grad_seminorm(&self) -> f64 {
        let n = self.spatial_len();
        let d = self.dims.len();
        let st = strides(&self.dims);
        let xt = xi_table(&self.lattice, &self.dims);
        let vol = self.lattice.cell_volume();
        let mut acc = 0.0f64;
        for t in 0..n {
            let mut xi2 = 0.0;
            for a in 0..d {
                let v = xt[a][(t / st[a]) % self.dims[a]];
                xi2 += v * v;
            }
            let mut amp = 0.0;
            for rc in 0..self.rows * self.cols {
                amp += self.coeffs[rc * n + t].norm_sqr();
            }
            acc += xi2 * amp;
        }
        (vol * acc).sqrt()
    }

    /// Multi-index Sobolev norm (sum over |beta| <= p of ||D^beta u||^2)^{1/2}.
    /// This is the convention under which the corrector a-priori bound holds
    /// with its stated constant; `norm_hs` uses the (1+|xi|^2)^s weight with
    /// binomial multiplicities and is slightly larger.
    pub fn norm_hp_multiindex(&self, p: usize) -> f64 {
        let n = self.spatial_len();
        let d = self.dims.len();
        let st = strides(&self.dims);
        let xt = xi_table(&self.lattice, &self.dims);
        let vol = self.lattice.cell_volume();
        let betas = multi_indices_up_to(d, p);
        let mut acc = 0.0f64;
        let mut xi = vec![0.0; d];
        for t in 0..n {
            for a in 0..d {
                xi[a] = xt[a][(t / st[a]) % self.dims[a]];
            }
            let w: f64 = betas
                .iter()
                .map(|b| {
                    let v = b.pow_real(&xi);
                    v * v
                })
                .sum();
            let mut amp = 0.0;
            for rc in 0..self.rows * self.cols {
                amp += self.coeffs[rc * n + t].norm_sqr();
            }
            acc += w * amp;
        }
        (vol * acc).sqrt()
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip(rhs, |a, b| a - b)
    }

    fn zip(&self, rhs: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.lattice != rhs.lattice
            || self.dims != rhs.dims
            || self.rows != rhs.rows
            || self.cols != rhs.cols
        {
            return Err(Error::invalid("field shapes do not match"));
        }
        let coeffs: Vec<Complex64> = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let values: Vec<Complex64> = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(PeriodicField {
            lattice: self.lattice.clone(),
            rows: self.rows,
            cols: self.cols,
            dims: self.dims.clone(),
            coeffs,
            values,
        })
    }

    pub fn scale(&self, z: Complex64) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.iter_mut() {
            *v *= z;
        }
        for v in out.values.iter_mut() {
            *v *= z;
        }
        out
    }

    /// Single column as a rows x 1 field.
    pub fn column(&self, c: usize) -> Self {
        assert!(c < self.cols);
        let n = self.spatial_len();
        let mut coeffs = Vec::with_capacity(self.rows * n);
        let mut values = Vec::with_capacity(self.rows * n);
        for r in 0..self.rows {
            let o = (r * self.cols + c) * n;
            coeffs.extend_from_slice(&self.coeffs[o..o + n]);
            values.extend_from_slice(&self.values[o..o + n]);
        }
        PeriodicField {
            lattice: self.lattice.clone(),
            rows: self.rows,
            cols: 1,
            dims: self.dims.clone(),
            coeffs,
            values,
        }
    }

    /// Assemble a rows x k field from k column fields on a common grid.
    pub fn from_columns(cols: &[Self]) -> Result<Self> {
        let first = cols.first().ok_or_else(|| Error::invalid("no columns"))?;
        let n = first.spatial_len();
        let rows = first.rows;
        let mut coeffs = vec![Complex64::default(); rows * cols.len() * n];
        let mut values = vec![Complex64::default(); rows * cols.len() * n];
        for (c, col) in cols.iter().enumerate() {
            if col.cols != 1 || col.rows != rows || col.dims != first.dims {
                return Err(Error::invalid("column fields are incompatible"));
            }
            for r in 0..rows {
                let dst = (r * cols.len() + c) * n;
                coeffs[dst..dst + n].copy_from_slice(&col.coeffs[r * n..(r + 1) * n]);
                values[dst..dst + n].copy_from_slice(&col.values[r * n..(r + 1) * n]);
            }
        }
        Ok(PeriodicField {
            lattice: first.lattice.clone(),
            rows,
            cols: cols.len(),
            dims: first.dims.clone(),
            coeffs,
            values,
        })
    }

    /// Conjugate transpose applied nodally.
    pub fn adjoint_field(&self) -> Self {
        let n = self.spatial_len();
        let mut values = vec![Complex64::default(); self.values.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let src = (r * self.cols + c) * n;
                let dst = (c * self.rows + r) * n;
                for t in 0..n {
                    values[dst + t] = self.values[src + t].conj();
                }
            }
        }
        PeriodicField::from_values(self.lattice.clone(), self.cols, self.rows, &self.dims, values)
            .expect("shape preserved")
    }

    /// Largest nodal spectral norm of the matrix value.
    pub fn max_spectral_norm(&self) -> f64 {
        let n = self.spatial_len();
        let mut worst = 0.0f64;
        for t in 0..n {
            worst = worst.max(crate::linalg::spectral_norm(&self.value_matrix(t)));
        }
        worst
    }
}

/// Mean of exp(-i eps <xi, z>) over the centered cell: the product of
/// sinc(eps xi_j L_j / 2) over the axes. Real, bounded by 1 in modulus.
pub fn steklov_multiplier(lattice: &Lattice, eps: f64, xi: &[f64]) -> f64 {
    assert_eq!(xi.len(), lattice.dim());
    xi.iter()
        .zip(lattice.lengths())
        .map(|(&x, &l)| sinc(0.5 * eps * x * l))
        .product()
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// Seeded band-limited column field with unit L2 norm: every mode with
/// max_j |k_j| <= band (and below Nyquist) gets an independent standard
/// complex Gaussian coefficient. Used as reproducible probe data for
/// resolvent studies and averaging checks.
pub fn seeded_band_field(
    lattice: &Lattice,
    rows: usize,
    dims: &[usize],
    band: i64,
    seed: u64,
) -> Result<PeriodicField> {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    let st = strides(dims);
    let d = dims.len();
    let mut coeffs = vec![Complex64::default(); rows * n];
    // Walk modes in a fixed (component, lexicographic signed-mode) order so
    // the draw sequence is independent of the grid size.
    for r in 0..rows {
        let mut stack = vec![0i64; d];
        loop {
            // signed modes -band..=band in odometer order
            let mut t = 0usize;
            let mut ok = true;
            for a in 0..d {
                let q = stack[a] - band;
                if q.abs() >= dims[a] as i64 / 2 {
                    ok = false;
                }
                t += (q.rem_euclid(dims[a] as i64)) as usize * st[a];
            }
            let re: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let im: f64 = 2.0 * rng.random::<f64>() - 1.0;
            if ok {
                coeffs[r * n + t] = Complex64::new(re, im);
            }
            let mut a = 0;
            loop {
                if a == d {
                    break;
                }
                stack[a] += 1;
                if stack[a] <= 2 * band {
                    break;
                }
                stack[a] = 0;
                a += 1;
            }
            if a == d {
                break;
            }
        }
    }
    let f = PeriodicField::from_coeffs(lattice.clone(), rows, 1, dims, coeffs)?;
    let nrm = f.norm_l2();
    if nrm == 0.0 {
        return Err(Error::invalid("probe field degenerated to zero"));
    }
    Ok(f.scale(Complex64::new(1.0 / nrm, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::Symbol;
    use std::f64::consts::PI;

    fn circle() -> Lattice {
        Lattice::rectangular(&[2.0 * PI]).unwrap()
    }

    /// e^{i k x} on the 2 pi circle.
    fn wave(k: i64, n: usize) -> PeriodicField {
        let lat = circle();
        PeriodicField::from_fn(lat, 1, 1, &[n], |x| {
            CMat::from_element(1, 1, Complex64::new(0.0, k as f64 * x[0]).exp())
        })
        .unwrap()
    }

    #[test]
    fn representation_consistency() {
        let u = wave(3, 16);
        assert!(u.consistency_defect() < 1e-12);
        assert!((u.coeff_matrix(&[3])[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(u.coeff_matrix(&[2])[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn second_derivative_of_sine() {
        // b(D) = D^2 with D = -i d/dx sends sin x to sin x
        let lat = circle();
        let u = PeriodicField::from_fn(lat, 1, 1, &[32], |x| {
            CMat::from_element(1, 1, Complex64::new(x[0].sin(), 0.0))
        })
        .unwrap();
        let b = Symbol::power_1d(2);
        let v = u.apply_symbol(&b).unwrap();
        for t in 0..32 {
            assert!((v.values_of(0, 0)[t] - u.values_of(0, 0)[t]).norm() < 1e-12);
        }
    }

    #[test]
    fn steklov_closed_forms() {
        let lat = circle();
        // eps = 1: sinc(pi) = 0
        assert!(steklov_multiplier(&lat, 1.0, &[1.0]).abs() < 1e-15);
        // eps = 1/2: sinc(pi/2) = 2/pi
        assert!((steklov_multiplier(&lat, 0.5, &[1.0]) - 2.0 / PI).abs() < 1e-15);
        let u = wave(1, 16);
        let s = u.apply_steklov(0.5);
        assert!((s.coeff_matrix(&[1])[(0, 0)].re - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn steklov_contraction_and_first_order_bound() {
        let lat = Lattice::rectangular(&[2.0 * PI, 1.0]).unwrap();
        let u = PeriodicField::from_fn(lat.clone(), 1, 1, &[8, 8], |x| {
            CMat::from_element(
                1,
                1,
                Complex64::new(
                    (x[0]).cos() + 0.3 * (2.0 * PI * 2.0 * x[1]).sin(),
                    0.2 * (2.0 * x[0]).sin(),
                ),
            )
        })
        .unwrap();
        for &eps in &[1.0, 0.25, 1.0 / 16.0] {
            let s = u.apply_steklov(eps);
            assert!(s.norm_l2() <= u.norm_l2() * (1.0 + 1e-12));
            let diff = s.sub(&u).unwrap();
            assert!(diff.norm_l2() <= eps * lat.r1() * u.grad_seminorm() + 1e-12);
        }
    }

    #[test]
    fn steklov_commutes_with_symbol() {
        let u = wave(2, 32);
        let b = Symbol::power_1d(1);
        let a = u.apply_symbol(&b).unwrap().apply_steklov(0.3);
        let c = u.apply_steklov(0.3).apply_symbol(&b).unwrap();
        assert!(a.sub(&c).unwrap().norm_l2() < 1e-12);
    }

    #[test]
    fn rescale_moves_modes() {
        let u = wave(1, 8);
        let v = u.rescale_to_eps(3).unwrap();
        assert_eq!(v.dims, vec![24]);
        assert!((v.coeff_matrix(&[3])[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        // nodal identity v(x) = u(3x)
        for t in 0..24 {
            let x = 2.0 * PI * t as f64 / 24.0;
            let expect = Complex64::new(0.0, 3.0 * x).exp();
            assert!((v.values_of(0, 0)[t] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn sobolev_norm_closed_form() {
        // ||e^{ix}||_{H^1} on the 2 pi cell: ((1+1) * 2 pi)^{1/2}
        let u = wave(1, 16);
        assert!((u.norm_hs(1) - (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!((u.norm_l2() - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_product_of_waves() {
        let a = wave(3, 8);
        let b = wave(2, 8);
        let p = a.matmul_exact(&b).unwrap();
        // e^{3ix} e^{2ix} = e^{5ix}; mode 5 does not fit an 8-grid band but
        // fits the padded 16-grid
        assert!((p.coeff_matrix(&[5])[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((p.norm_l2() - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn embedding_on_double_torus() {
        let u = wave(1, 8); // cell 2 pi
        let torus = Lattice::rectangular(&[4.0 * PI]).unwrap();
        let v = u.embed_rescaled(2, &torus, &[64]).unwrap();
        // u(x/eps) = e^{2ix} = mode 4 of the 4 pi torus
        assert!((v.coeff_matrix(&[4])[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let tight = u.embed_rescaled(2, &torus, &[8]);
        assert!(tight.is_err());
    }

    #[test]
    fn mean_and_zero_mean() {
        let lat = circle();
        let u = PeriodicField::from_fn(lat, 1, 1, &[16], |x| {
            CMat::from_element(1, 1, Complex64::new(2.0 + x[0].sin(), 0.0))
        })
        .unwrap();
        assert!((u.mean()[(0, 0)].re - 2.0).abs() < 1e-12);
        let z = u.zero_mean();
        assert!(z.mean()[(0, 0)].norm() < 1e-15);
    }
}
