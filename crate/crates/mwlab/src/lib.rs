//! Numerical laboratory for matrix-weighted harmonic analysis on dyadic grids.
//!
//! Weights are piecewise constant on the atoms of a grid over `[0,1)^n`, so
//! every average, supremum and norm below is a finite computation and every
//! inequality can be checked exactly up to floating-point rounding.

pub mod characteristics;
pub mod convex;
pub mod error;
pub mod exponent;
pub mod extrapolation;
pub mod geometry;
pub mod ledger;
pub mod maximal;
pub mod mesh;
pub mod mvee;
pub mod spd;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
