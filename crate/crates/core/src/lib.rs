//! Matrix-weighted commutators and convex-body sparse domination on dyadic grids.
//!
//! Every integral is an exact finite sum over the cells of a piecewise-constant
//! grid on the torus `[0,1)^d`, so identities are checkable to rounding error and
//! inequalities can be audited as ratios.

pub mod bmo;
pub mod commutator;
pub mod domination;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod pdmat;
pub mod tuples;
pub mod weights;

pub use error::{Error, Result};
pub use linalg::{Matrix, Scalar};
