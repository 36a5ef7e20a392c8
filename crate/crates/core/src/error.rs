use thiserror::Error;

use crate::expr::ParseError;
use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", join(.0))]
    InvalidModel(Vec<Violation>),

    #[error("model file, at `{path}`: {message}")]
    ModelFile { path: String, message: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("{what} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stage mismatch: expected next slice at t={expected}, got t={found}")]
    StageMismatch { expected: i64, found: i64 },

    #[error("stage t={t} outside [{t0}, {horizon}]")]
    StageOutOfRange { t: i64, t0: i64, horizon: i64 },

    #[error("confidence level beta = {0} outside (0, 1]")]
    BetaOutOfRange(f64),

    #[error("control index {control} is not admissible at t={t}, x={x}")]
    InadmissibleControl { t: i64, x: usize, control: usize },

    #[error("state index {0} is not a grid state")]
    InvalidState(usize),

    #[error("enumeration needs {0:.3e} policies, above the limit of 1e6")]
    EnumerationGuard(f64),

    #[error("malformed CSV: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
