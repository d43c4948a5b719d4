use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: missing value (impute before loading)")]
    MissingValue { row: usize, column: String },

    #[error("row {row}, column `{column}`: binary column holds {value}, expected 0 or 1")]
    InvalidBinary {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("row {row}, column `{column}`: non-finite value")]
    NonFinite { row: usize, column: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate column `{0}`")]
    DegenerateColumn(String),

    #[error("every constraint column is numerically constant")]
    AllConstantConstraints,

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("degenerate GPS model: residual standard deviation is zero")]
    DegenerateGps,

    #[error("local fit at a0 = {a0} is degenerate: {reason}")]
    LocalDegeneracy { a0: f64, reason: String },

    #[error("no span in the candidate grid produced a valid cross-validation error")]
    NoValidSpan,

    #[error("point {0} lies outside the curve's grid")]
    OutsideGrid(f64),

    #[error("point {0} falls on a gap of the estimated curve")]
    CurveGap(f64),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("weight solve did not converge ({0})")]
    NotConverged(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::AllConstantConstraints
                | Error::SingularDesign(_)
                | Error::DegenerateGps
                | Error::LocalDegeneracy { .. }
                | Error::NoValidSpan
                | Error::NotConverged(_)
                | Error::ZeroWeights
        )
    }
}
