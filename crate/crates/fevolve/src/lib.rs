//! Finite-dimensional evolution toolkit: hat-basis projectors over tensor
//! grids, exactly factorizable diffusion operators, spectral bracketing, and
//! contraction-based solvers for semilinear elliptic and evolution problems.

pub mod cli;
pub mod contraction;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod mesh_basis;
pub mod operator;
pub mod problems;
pub mod spectral;

pub use error::{Error, Result};
