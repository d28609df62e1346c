//! One error type for the whole crate: validation failures, linear-algebra
//! breakdowns and solver trouble all end up here so callers can match on a
//! single enum.

use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A matrix that must be square is not.
    #[error("matrix is not square: {rows} rows x {cols} columns")]
    NotSquare { rows: usize, cols: usize },

    /// A transition-matrix column does not sum to one.
    #[error("transition matrix column {column} sums to {sum:e}, expected 1 within {tolerance:e}")]
    NonStochastic {
        column: usize,
        sum: f64,
        tolerance: f64,
    },

    /// A transition-matrix entry lies outside [0, 1].
    #[error("transition matrix entry ({row}, {column}) = {value} lies outside [0, 1]")]
    EntryOutOfRange {
        row: usize,
        column: usize,
        value: f64,
    },

    /// Determinant too close to zero to invert.
    #[error("matrix is singular: |det| = {det:e} is below {threshold:e}")]
    Singular { det: f64, threshold: f64 },

    /// Invertible in principle but numerically hopeless.
    #[error("matrix condition number {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    /// Shapes that must agree do not; the message names the offenders.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A named column is missing from the dataset.
    #[error("column '{name}' not found in dataset")]
    MissingColumn { name: String },

    /// A categorical level is outside 0..levels.
    #[error("record {record}: level {level} is out of range for {levels} levels")]
    LevelOutOfRange {
        record: usize,
        level: usize,
        levels: usize,
    },

    /// A marginal frequency that must be strictly positive is not.
    #[error("marginal frequency at index {index} is {value}, expected strictly positive")]
    ZeroMarginal { index: usize, value: f64 },

    /// Logistic estimand asked for on a non-binary response.
    #[error("logistic estimand requires a binary response: {context}")]
    NonBinaryResponse { context: String },

    /// Custom estimating-function table is missing a level.
    #[error("custom estimating function defines {given} level functions, expected {expected}")]
    MissingLevel { given: usize, expected: usize },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value encountered: {context}")]
    NonFinite { context: String },

    /// Newton system stayed unsolvable even after diagonal damping.
    #[error("Newton system is singular after diagonal damping up to {max_damping:e}")]
    SingularJacobian { max_damping: f64 },

    /// The averaged Jacobian of the estimating equation cannot be inverted
    /// for the sandwich covariance.
    #[error("averaged Jacobian is numerically singular: condition {condition:e} exceeds {limit:e}")]
    SingularOmega { condition: f64, limit: f64 },

    /// Too many resampled solves failed to converge for the covariance to be
    /// trusted.
    #[error("{failures} of {resamples} resampled solves failed to converge (more than {limit_percent}% allowed)")]
    TooManyFailures {
        failures: usize,
        resamples: usize,
        limit_percent: f64,
    },

    /// Latent-model fit collapsed (probabilities pinned at 0/1 or a
    /// non-finite likelihood term).
    #[error("latent model degenerate: {context}")]
    DegenerateModel { context: String },

    /// Bad configuration value (tolerances, counts, levels...).
    #[error("invalid configuration: {context}")]
    InvalidConfig { context: String },
}
