//! Gradient flow on symmetric matrix factorization `min ¼||Y − UUᵀ||²_F`.
//!
//! The induced flow on `W = UUᵀ` is a matrix Riccati equation with a closed
//! form. This crate evaluates it stably, derives the incremental-learning
//! schedule (the time windows in which `W(t)` sits near each best rank-k
//! approximation of `Y`), and checks everything against adaptive Runge–Kutta
//! integration.
//!
//! - [`spectral`]: target matrix, eigendecomposition, rank-k truncations
//! - [`riccati`]: initialization data and the closed-form evaluator
//! - [`integrator`]: Dormand–Prince reference integration
//! - [`schedule`]: constants, admissibility, intervals, verification
//! - [`harness`]: config-driven experiments and the `gflow` CLI

// Argument checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod riccati;
pub mod rng;
pub mod schedule;
pub mod spectral;

pub use error::{Error, Result};
pub use integrator::{integrate_u, integrate_w, Flow, IntegratorConfig};
pub use riccati::{ClosedFormEvaluator, EvalMode, Initialization, TrajectorySample};
pub use schedule::{
    BlockDiagnostics, Regime, ScheduleReport, VerificationReport,
};
pub use spectral::{RankKTruncation, TargetMatrix};
