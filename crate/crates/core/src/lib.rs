//! Multi-dictionary sparse Bayesian learning (SBL) for detecting an unknown
//! number of objects and estimating their continuous 2-D positions from
//! several independent MIMO radars.
//!
//! The crate is organised bottom-up:
//!
//! - [`array`]: sensor geometry and the parameterized dictionary atom.
//! - [`numerics`]: bounded simplex search, polynomial roots, Hermitian
//!   Cholesky and the low-rank factor cache used for fast leave-one-out
//!   statistics.
//! - [`sbl`]: the coordinate-ascent solver.
//! - [`nomp`]: matching-pursuit baseline with continuous refinement.
//! - [`scenario`]: ground truth scenes and seeded synthetic observations.
//! - [`metrics`]: OSPA and gated detection statistics.

pub mod array;
pub mod error;
pub mod metrics;
pub mod nomp;
pub mod numerics;
pub mod sbl;
pub mod scenario;

pub use array::{Atom, Dictionary, Position, RadarGeometry, Region};
pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Converts a decibel value to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}
