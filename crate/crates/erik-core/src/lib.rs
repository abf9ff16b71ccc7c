//! Orientation-plus-posture inverse kinematics for serial chains, with CCD
//! and Jacobian baselines, an output motion filter and an evaluation
//! harness.

// `!(x > 0.0)` style checks are kept because they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod catalog;
pub mod ccd;
pub mod error;
pub mod erik;
pub mod eval;
pub mod filter;
pub mod geom;
pub mod io;
pub mod jacobian;
pub mod metrics;
pub mod registry;
pub mod skeleton;

pub use error::{Error, Result};
pub use registry::{IkSolver, SolverRegistry};
