//! Min-sum message passing for `min ½xᵀΓx − hᵀx` on sparse graphs.
//!
//! Instances are normalized to unit diagonal. The synchronous engine lives in
//! [`engine`], a seeded asynchronous simulator in [`async_engine`], and
//! [`analysis`] and [`walksum`] hold the fixed-point and walk-sum oracles used
//! to check it.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod async_engine;
pub mod cli;
pub mod decomposition;
pub mod engine;
pub mod error;
pub mod generate;
pub mod io;
pub mod model;
pub mod walksum;

pub use analysis::{analyze, compute_gamma_star, spectral_radius, AnalysisReport};
pub use async_engine::{run_async, AsyncConfig, AsyncRun};
pub use decomposition::{construct_witness, is_convex_dominated, EdgeParams, Witness};
pub use engine::{run_sync, SolverConfig, SolverState, Status, Trace};
pub use error::{Error, Result};
pub use model::{direct_solve, normalize, QuadraticProblem, RawProblem};
