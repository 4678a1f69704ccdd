//! Model-function based conditional gradient method for constrained
//! non-smooth non-convex minimization.
//!
//! The crate is layered bottom-up:
//!
//! * [`sets`], [`growth`], [`psd`]: geometry (constraint sets with linear
//!   minimization oracles and projections, growth functions, PSD cone).
//! * [`models`]: convex model functions anchored at the current iterate.
//! * [`inner`]: preconditioned primal-dual solver for the piecewise-linear
//!   subproblems, a projected-gradient QP solver, and brute-force oracles.
//! * [`solver`]: the conditional gradient loop with Armijo backtracking.
//! * [`baselines`]: prox-linear methods with line search and with
//!   backtracking on the proximal weight.
//! * [`harness`]: robust regression and matrix factorization experiments,
//!   dataset/trace file formats.

pub mod baselines;
pub mod error;
pub mod growth;
pub mod harness;
pub mod inner;
pub mod linalg;
pub mod models;
pub mod psd;
pub mod sets;
pub mod solver;

pub use error::{Error, Result};
pub use growth::GrowthFunction;
pub use linalg::{DenseMatrix, DenseVector};
pub use models::{ModelFamily, ModelInstance, ModelOracle, Regularizer};
pub use sets::ConstraintSet;
pub use solver::{
    mcgm_solve, IterationRecord, LineSearchParams, SolverConfig, SolverStatus, SolverTrace,
};
