//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be positive definite failed its Cholesky check.
    #[error("degenerate scatter matrix: {0}")]
    DegenerateScatter(String),

    /// A missing-structure operation received an incompatible input.
    #[error("missing-structure error: {0}")]
    Structure(String),

    /// A sampler precondition derived from condition H1 failed.
    #[error("condition H1 violated for pattern {pattern}: df = {df}")]
    H1Violation { pattern: usize, df: f64 },

    /// Conditional for the regression parameters is improper.
    #[error("improper conditional: degrees of freedom {nu} <= {limit}")]
    ImproperConditional { nu: f64, limit: f64 },

    /// Tilted conditional cannot be sampled for this family at r = 0.
    #[error("tilt-degenerate draw: family {family} with r = 0 has an unbounded envelope")]
    TiltDegenerate { family: &'static str },

    /// A rejection sampler exhausted its proposal budget.
    #[error(
        "sampling budget exhausted: family {family}, d_i = {d_i}, r = {r:.6e}, \
         {proposals} proposals rejected"
    )]
    SamplingBudget {
        family: &'static str,
        d_i: usize,
        r: f64,
        proposals: usize,
    },

    /// Quadrature in the moment oracle failed to converge.
    #[error("oracle error: {0}")]
    Oracle(String),

    /// A distribution or configuration parameter is outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Not enough data for the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// CSV ingestion failure with the offending line.
    #[error("ingest error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    /// Run configuration is inconsistent or refers to missing files.
    #[error("config error: {0}")]
    Config(String),

    /// An error raised inside a chain iteration, annotated with its index.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// An error raised while processing one data row.
    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_row(self, row: usize) -> Self {
        Error::AtRow {
            row,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
