//! Random walk phase estimation.
//!
//! A constant-memory Bayesian estimator for the eigenphase of iterative phase estimation: the
//! posterior is kept as a Gaussian whose mean takes a step of fixed size up or down after each
//! measurement and whose width contracts by a fixed factor. Consistency checks detect when the
//! Gaussian approximation has failed, and the walk is then unwound along its recorded data.
//!
//! Alongside the estimator the crate provides a seeded measurement simulator, a Liu–West
//! particle filter for postprocessing the same data, and an ensemble harness for loss
//! statistics and the van Trees bound.

pub mod bench;
pub mod inference;
pub mod oracle;
pub mod particle;
pub mod risk;
pub mod walker;

pub use inference::{Datum, ExperimentParams, GaussianState, InferenceError};
pub use oracle::{MeasurementOracle, OracleError, ReplayOracle, SimulatedOracle};
pub use particle::{LiuWestConfig, ParticleCloud, ParticleError};
pub use risk::{RiskSummary, TrialRecord};
pub use walker::{UnwindMode, WalkerConfig, WalkerError, WalkerState};
