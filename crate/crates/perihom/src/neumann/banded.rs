//! Banded direct solvers, generic over real and complex scalars.
//!
//! Galerkin matrices from spline and Q1 spaces are banded; the bounded-domain
//! solves factor them directly. Two storage schemes are provided: a general
//! band with room for partial-pivoting fill (LU, works for indefinite
//! shifted pencils S - zeta M), and a Hermitian lower band (Cholesky, for
//! definite problems, at half the memory — this matters for the large 2-D
//! reference meshes).

use crate::error::{Error, Result};
use num_complex::ComplexFloat;
use num_traits::{Float, Zero};

/// Double-double accumulator for compensated residuals. Spline stiffness
/// matrices of higher-order operators are so ill-conditioned (kappa ~ h^-2p)
/// that a plain f64 solve loses several digits; iterative refinement with
/// residuals accumulated here restores full working accuracy.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    #[inline]
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = Self::two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    /// Accumulate a * b with the exact FMA product split.
    #[inline]
    pub fn add_prod(&mut self, a: f64, b: f64) {
        let p = a * b;
        let err = a.mul_add(b, -p);
        self.add(p);
        self.lo += err;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }
}

/// General banded matrix with kl sub- and ku super-diagonals. Storage is
/// column-major LAPACK band layout with kl extra super-rows so the LU
/// factorization can fill in place.
#[derive(Clone, Debug)]
pub struct BandedMatrix<T> {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    rows: usize,
    data: Vec<T>,
}

impl<T: ComplexFloat> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let rows = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            rows,
            data: vec![T::zero(); rows * n],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "outside the band");
        self.kl + self.ku + i - j + j * self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i + self.ku < j || j + self.kl < i {
            return T::zero();
        }
        self.data[self.slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j);
        self.data[s] = self.data[s] + v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] = y[i] + self.get(i, j) * x[j];
            }
        }
        y
    }

    /// LU with partial pivoting, in place. Row interchanges stay within the
    /// band; the upper bandwidth grows to kl + ku (pre-allocated).
    pub fn lu(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kw = kl + ku; // effective upper bandwidth after pivoting
        let mut pivots = vec![0usize; n];
        for j in 0..n {
            let imax = (j + kl).min(n - 1);
            // pivot search in column j
            let mut piv = j;
            let mut pmag = self.get(j, j).abs();
            for i in j + 1..=imax {
                let mag = self.data[self.slot_ext(i, j)].abs();
                if mag > pmag {
                    pmag = mag;
                    piv = i;
                }
            }
            if pmag == <T as ComplexFloat>::Real::zero() {
                return Err(Error::singular(format!(
                    "banded LU: zero pivot at column {j}"
                )));
            }
            pivots[j] = piv;
            let jhi = (j + kw).min(n - 1);
            if piv != j {
                for c in j..=jhi {
                    let a = self.slot_ext(j, c);
                    let b = self.slot_ext(piv, c);
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.slot_ext(j, j)];
            for i in j + 1..=imax {
                let s = self.slot_ext(i, j);
                let l = self.data[s] / d;
                self.data[s] = l;
                for c in j + 1..=jhi {
                    let t = self.data[self.slot_ext(j, c)];
                    let q = self.slot_ext(i, c);
                    self.data[q] = self.data[q] - l * t;
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            kw,
            rows: self.rows,
            data: self.data,
            pivots,
        })
    }

    /// Band slot valid for the widened (post-pivot) band kl + ku.
    #[inline]
    fn slot_ext(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && i + self.kl + self.ku >= j);
        self.kl + self.ku + i - j + j * self.rows
    }
}

/// Factored form of a general banded matrix.
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    kw: usize,
    rows: usize,
    data: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: ComplexFloat> BandedLu<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        // storage row of entry (i, j) is kw + i - j, kw = kl + ku
        let off = self.kw;
        // forward: apply pivots and L (unit lower, bandwidth kl)
        for j in 0..self.n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let hi = (j + self.kl).min(self.n - 1);
            let bj = b[j];
            for i in j + 1..=hi {
                let l = self.data[off + i - j + j * self.rows];
                b[i] = b[i] - l * bj;
            }
        }
        // backward: U with bandwidth kw
        for j in (0..self.n).rev() {
            let d = self.data[off + j * self.rows];
            let x = b[j] / d;
            b[j] = x;
            let lo = j.saturating_sub(self.kw);
            for i in lo..j {
                let u = self.data[off + i - j + j * self.rows];
                b[i] = b[i] - u * x;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Hermitian matrix stored as its lower band only.
#[derive(Clone, Debug)]
pub struct SymBanded<T> {
    pub n: usize,
    pub kw: usize,
    data: Vec<T>,
}

impl<T: ComplexFloat> SymBanded<T> {
    pub fn zeros(n: usize, kw: usize) -> Self {
        SymBanded {
            n,
            kw,
            data: vec![T::zero(); (kw + 1) * n],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.kw);
        (i - j) + j * (self.kw + 1)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i >= j {
            if i - j > self.kw {
                T::zero()
            } else {
                self.data[self.slot(i, j)]
            }
        } else if j - i > self.kw {
            T::zero()
        } else {
            self.data[self.slot(j, i)].conj()
        }
    }

    /// Accumulate into entry (i, j); only the lower triangle is stored, so
    /// callers should pass each Hermitian pair once with i >= j.
    pub fn add_lower(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j);
        self.data[s] = self.data[s] + v;
    }

    /// self += c * other; the other matrix must not be wider-banded.
    pub fn add_scaled(&mut self, other: &SymBanded<T>, c: T) {
        assert_eq!(self.n, other.n);
        assert!(other.kw <= self.kw);
        for j in 0..self.n {
            let depth = other.kw.min(self.n - 1 - j);
            for r in 0..=depth {
                let s = self.slot(j + r, j);
                self.data[s] = self.data[s] + c * other.data[other.slot(j + r, j)];
            }
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for j in 0..self.n {
            let hi = (j + self.kw).min(self.n - 1);
            y[j] = y[j] + self.data[self.slot(j, j)] * x[j];
            for i in j + 1..=hi {
                let v = self.data[self.slot(i, j)];
                y[i] = y[i] + v * x[j];
                y[j] = y[j] + v.conj() * x[i];
            }
        }
        y
    }

    /// In-place banded Cholesky A = L L^H. Fails on non-positive pivots, so
    /// it doubles as a definiteness certificate.
    pub fn cholesky(mut self) -> Result<SymBandedChol<T>> {
        let n = self.n;
        let kw = self.kw;
        for j in 0..n {
            let mut d = self.data[self.slot(j, j)];
            let lo = j.saturating_sub(kw);
            for k in lo..j {
                if j - k <= kw {
                    let l = self.data[self.slot(j, k)];
                    d = d - l * l.conj();
                }
            }
            let dre = d.re();
            let dim = d.im();
            if !(dre > <T as ComplexFloat>::Real::zero()) {
                return Err(Error::singular(format!(
                    "banded Cholesky: non-positive pivot at column {j}"
                )));
            }
            let herm_tol: <T as ComplexFloat>::Real = num_traits::cast(1e-10).unwrap();
            if Float::abs(dim) > dre * herm_tol {
                return Err(Error::singular(
                    "banded Cholesky: matrix is not Hermitian",
                ));
            }
            let ljj = d.sqrt();
            let s = self.slot(j, j);
            self.data[s] = ljj;
            let hi = (j + kw).min(n - 1);
            for i in j + 1..=hi {
                let mut v = self.data[self.slot(i, j)];
                let lo2 = i.saturating_sub(kw).max(lo);
                for k in lo2..j {
                    let a = self.data[self.slot(i, k)];
                    let b = self.data[self.slot(j, k)];
                    v = v - a * b.conj();
                }
                let s = self.slot(i, j);
                self.data[s] = v / ljj;
            }
        }
        Ok(SymBandedChol {
            n,
            kw,
            data: self.data,
        })
    }
}

pub struct SymBandedChol<T> {
    n: usize,
    kw: usize,
    data: Vec<T>,
}

impl<T: ComplexFloat> SymBandedChol<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.data[(i - j) + j * (self.kw + 1)]
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        // L y = b
        for j in 0..self.n {
            let x = b[j] / self.at(j, j);
            b[j] = x;
            let hi = (j + self.kw).min(self.n - 1);
            for i in j + 1..=hi {
                b[i] = b[i] - self.at(i, j) * x;
            }
        }
        // L^H x = y
        for j in (0..self.n).rev() {
            let mut v = b[j];
            let hi = (j + self.kw).min(self.n - 1);
            for i in j + 1..=hi {
                v = v - self.at(i, j).conj() * b[i];
            }
            b[j] = v / self.at(j, j).conj();
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
