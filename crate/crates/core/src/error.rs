use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure of a single per-emission solve.
///
/// Kept `Clone` so trajectory sweeps can record failures next to successful
/// estimates without aborting.
#[derive(Debug, Clone, PartialEq, Error, serde::Serialize)]
pub enum SolveError {
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("singular system: pivot {pivot:e} below threshold {threshold:e}")]
    SingularSystem { pivot: f64, threshold: f64 },
    #[error("rank deficient system: smallest singular value {sigma_min:e}, largest {sigma_max:e}")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    #[error("search box too small: minimizer lies on the box boundary at {position}")]
    BoxTooSmall { position: crate::Vec3 },
    #[error("layout not supported by this method: {0}")]
    UnsupportedLayout(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("event {event} coincides with sensor {sensor}")]
    SourceOnSensor { event: usize, sensor: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("degenerate fit: all abscissae are equal")]
    DegenerateFit,
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
