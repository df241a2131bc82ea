//! Transverse geometry of Riemannian foliations given by global orthonormal
//! frames: Koszul connection coefficients, mean curvature, sub-distribution
//! divergences, and the divergence-sign tautness test.

pub mod builtin;
pub mod cli;
pub mod connection;
pub mod error;
pub mod expr;
pub mod model;
pub mod spectral;
pub mod tautness;

pub use error::{Error, ErrorClass, Result};
