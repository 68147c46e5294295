//! Risk-averse convexification of nonconvex objectives by Gaussian smoothing
//! and exponential tilting, with stochastic solvers, sensitivity certificates,
//! risk-averse control and linear-feedback synthesis.

// `!(x > 0.0)` is how parameter checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod apps;
pub mod control;
pub mod objective;
pub mod parallel;
pub mod sampler;
pub mod sensitivity;
pub mod solver;
pub mod stats;
pub mod synthesis;
pub mod table;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
