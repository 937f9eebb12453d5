//! Numerical laboratory for local subexponentiality.
//!
//! The central object is the density `phi(x) = x^{-1-alpha} h(ln x)` on `[1, inf)`
//! with `h` log-periodic and vanishing (logarithmically slowly) at the dip centers
//! `b^m x0`. Points are carried as [`ScaledSum`]s so that the dip phase of points
//! like `4^256 * 2 + 0.3` is exact, and every integral is computed in log space.

// `!(a < b)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convolve;
pub mod error;
pub mod gallery;
pub mod kernel;
pub mod logspace;
pub mod measures;
pub mod model;
pub mod probes;
pub mod quadrature;
pub mod scaled;

pub use error::{Error, QuadratureError, Result};
pub use logspace::LogBracket;
pub use model::{make_sequence, phi_log_value, profile_value, ModelParams, PeriodicProfile, Regime, SequenceSpec};
pub use quadrature::QuadratureSpec;
pub use scaled::ScaledSum;
