//! Numerical laboratory for continuum-limit analysis of causal fermion
//! systems on globally hyperbolic spacetimes.
//!
//! The pipeline builds, for pairs of points in a metric chart:
//! geodesics and the world function, the van Vleck determinant and spin
//! parallel transport, regularized light-cone symbols, a regularizing
//! field solved order by order in the regularization scale, heat-kernel
//! style expansion coefficients of the Green kernel, the fermionic
//! projector with its closed chain spectrum, and finally perturbations
//! of the spectrum that yield a trace-free curvature equation and an
//! effective gravitational coupling.

pub mod error;
pub mod linalg;
pub mod ode;
pub mod quad;

pub mod geometry;
pub mod worldfunc;
pub mod bitensor;
pub mod symbols;
pub mod regfield;
pub mod sdw;
pub mod projector;
pub mod action;
pub mod verify;

pub use error::{Error, Result};

/// Spacetime dimension. The spinor fiber is C^4 and the spin dimension is 2.
pub const DIM: usize = 4;
