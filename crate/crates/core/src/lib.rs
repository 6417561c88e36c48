//! Stochastic dual dynamic programming with quadratic regularization for
//! multistage stochastic linear programs, with stagewise-independent or
//! Markov-chain uncertainty.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: problem data, uncertainty processes, scenario sampling.
//! * [`solver`]: dense revised simplex and active-set QP for stage problems.
//! * [`cutpool`]: piecewise-linear value function approximations.
//! * [`engine`]: forward/backward passes, lower and upper bounds.
//! * [`oracle`]: exact scenario-tree answers for small instances.
//! * [`harness`]: instance generators, reports and the CLI driver.

pub mod cutpool;
pub mod engine;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
