//! Numerical toolkit for periodic homogenization of higher-order elliptic
//! systems b(D)^* g(x/eps) b(D).
//!
//! The library computes the periodic corrector, the effective matrix and the
//! flux field from the cell problem, solves shifted resolvent problems for
//! the oscillatory and the effective operator on a torus and on an interval
//! or rectangle with natural boundary conditions, builds the smoothed
//! correctors that repair convergence in the energy norm, and runs the rate
//! studies that verify the expected eps and shift scalings.

pub mod cell;
pub mod coefficient;
pub mod error;
pub mod fft;
pub mod field;
pub mod lattice;
pub mod linalg;
pub mod neumann;
pub mod resolvent;
pub mod study;
pub mod symbol;

pub use error::{Error, Result};
