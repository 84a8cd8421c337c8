//! Bounded-domain Neumann-type resolvent problems and their comparison
//! against the homogenized operator plus correctors.
//!
//! The domain is an axis-aligned box embedded in a torus whose sides extend
//! it by a collar; spline (1-D) or Q1 (2-D) Galerkin spaces discretize the
//! form integral over O of <g(x/eps) b(d) u, b(d) v> + boundary-free natural
//! conditions. Corrector fields come from the torus machinery through a
//! smooth reflection extension of the effective solution.

pub mod banded;
pub mod bstudy;
pub mod bspline;
pub mod eig;
pub mod extension;
pub mod fast2d;
pub mod measure;
pub mod mixed;
pub mod q1;
pub mod space;
pub mod study;
pub mod study2d;

pub use banded::{BandedLu, BandedMatrix, SymBanded, SymBandedChol};
pub use bspline::{BSplineBasis, Spline};
pub use space::SplineSpace;
