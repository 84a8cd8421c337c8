//! Rectangular periodicity lattices.
//!
//! Only axis-aligned rectangular lattices are supported: basis vectors
//! L_j e_j, dual basis (2 pi / L_j) e_j, centered fundamental cell
//! (-L_j/2, L_j/2). The nodal grid used by fields samples the equivalent
//! cell [0, L_j) at x_t = t L_j / n_j, which changes nothing for periodic
//! integrands; centering only matters for the smoothing multiplier and the
//! cell geometry constants.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    lengths: Vec<f64>,
}

impl Lattice {
    pub fn rectangular(lengths: &[f64]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::invalid("lattice needs at least one axis"));
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lattice side lengths must be positive"));
        }
        Ok(Lattice {
            lengths: lengths.to_vec(),
        })
    }

    /// Unit cell [0,1)^d (side lengths 1).
    pub fn unit(d: usize) -> Self {
        Lattice::rectangular(&vec![1.0; d]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn basis(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| {
                let mut v = vec![0.0; self.dim()];
                v[j] = self.lengths[j];
                v
            })
            .collect()
    }

    pub fn dual_basis(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| {
                let mut v = vec![0.0; self.dim()];
                v[j] = 2.0 * std::f64::consts::PI / self.lengths[j];
                v
            })
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Half the norm of the shortest nonzero dual lattice vector.
    pub fn r0(&self) -> f64 {
        let max_l = self.lengths.iter().cloned().fold(0.0, f64::max);
        std::f64::consts::PI / max_l
    }

    /// Half the diameter of the fundamental cell.
    pub fn r1(&self) -> f64 {
        0.5 * self.lengths.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// Dual vector 2 pi (k_1/L_1, ..., k_d/L_d) of an integer mode.
    pub fn xi(&self, k: &[i64]) -> Vec<f64> {
        assert_eq!(k.len(), self.dim());
        k.iter()
            .zip(&self.lengths)
            .map(|(&kj, &lj)| 2.0 * std::f64::consts::PI * kj as f64 / lj)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_pairing() {
        let lat = Lattice::rectangular(&[2.0 * std::f64::consts::PI, 0.5]).unwrap();
        let b = lat.basis();
        let s = lat.dual_basis();
        for i in 0..2 {
            for j in 0..2 {
                let dot: f64 = s[i].iter().zip(&b[j]).map(|(a, c)| a * c).sum();
                let expect = if i == j { 2.0 * std::f64::consts::PI } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn geometry_constants() {
        let lat = Lattice::rectangular(&[2.0, 1.0]).unwrap();
        assert!((lat.cell_volume() - 2.0).abs() < 1e-15);
        // shortest dual vector is 2 pi / 2 = pi, half of it pi/2
        assert!((lat.r0() - std::f64::consts::PI / 2.0).abs() < 1e-15);
        // cell diameter sqrt(5), half of it
        assert!((lat.r1() - 0.5 * 5f64.sqrt()).abs() < 1e-15);
        assert!(Lattice::rectangular(&[1.0, -1.0]).is_err());
    }
}
