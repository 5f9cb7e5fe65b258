//! Forward-backward greedy estimation for multiple sparse linear regression
//! where the coefficient matrix mixes rows shared by all tasks with
//! task-specific entries.
//!
//! The [`engine`] module holds the solver; [`diagnostics`] computes the
//! quantities its recovery guarantees are stated in; [`experiments`] and
//! [`digits`] drive the synthetic phase-transition study and the handwritten
//! digits benchmark; [`oracle`] contains brute-force references used by tests;
//! [`files`] reads and writes the JSON problem and report formats.

pub mod diagnostics;
pub mod digits;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod files;
pub mod linalg;
pub mod oracle;
pub mod problem;

pub use engine::{fit, fit_separately, refit};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use problem::{
    loss, task_support, CoefficientMatrix, FitReport, GreedyConfig, MultiTaskProblem, ObjectKind,
    RewardLedger, StepKind, StepRecord, SupportObject, SupportPattern, Task, Termination, TieBreak,
};
