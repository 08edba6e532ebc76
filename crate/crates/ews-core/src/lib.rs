//! Early-warning-system pipeline for market crises.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`frame`]: factor panel ingestion, frequency alignment, splitting and
//!   standardization.
//! - [`classify`]: crisis labeling via technical indices (FPI, EPI, CMAX) and
//!   via AR-SWARCH regime filtering with fixed or histogram-valley cutoffs,
//!   plus misspecification-rate validation.
//! - [`predict`]: six predictors (stepwise logit, KLR signal extraction, MLP,
//!   random forest, gradient boosting, attention-LSTM) behind one interface.
//! - [`evaluate`]: hit ratios, calibration scores and report assembly.
//! - [`backtest`]: signal-driven portfolio weights, Sharpe/CER, and the
//!   stationary-bootstrap reality check.
//! - [`sim`]: seeded synthetic data generation for end-to-end verification.

pub mod backtest;
pub mod classify;
pub mod evaluate;
pub mod frame;
pub mod predict;
pub mod sim;

mod optim;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum EwsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("row {row}: malformed date {value:?}")]
    BadDate { row: usize, value: String },
    #[error("non-monotone dates at row {row}")]
    NonMonotoneDates { row: usize },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("ragged row {row}: expected {expected} fields, got {got}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {column:?}: nonpositive value {value} at position {index}")]
    NonPositive {
        column: String,
        value: f64,
        index: usize,
    },
    #[error("column {0:?} has no observed values")]
    AllMissing(String),
    #[error("zero standard deviation in {0}")]
    ZeroStd(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("split fraction {fraction} leaves an empty side for {len} rows")]
    BadSplit { fraction: f64, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("no crisis observations")]
    NoCrisisObservations,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("optimizer failed to converge after {iters} iterations (best log-likelihood {best_ll})")]
    NonConvergence { iters: usize, best_ll: f64 },
    #[error("model not fitted")]
    NotFitted,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),
    #[error("date misalignment: {0}")]
    DateMisalignment(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, EwsError>;
