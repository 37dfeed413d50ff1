use thiserror::Error;

use crate::refine::RefinementTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate matrix: column {column} has norm {norm:e} after projection")]
    DegenerateMatrix { column: usize, norm: f64 },

    #[error("point behind camera: z = {z} < near = {near}")]
    BehindCamera { z: f64, near: f64 },

    #[error("unknown instance {0}")]
    UnknownInstance(usize),

    #[error("unknown mesh {0}")]
    UnknownMesh(usize),

    #[error("fusion produced no samples: no view covers any pixel")]
    FusionEmpty,

    #[error("no covered pixels in either frame")]
    EmptyCorrespondences,

    #[error("loss undefined: both positive and negative sets are empty")]
    UndefinedLoss,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("placement failed after {attempts} attempts")]
    PlacementFailure { attempts: usize },

    #[error("numeric failure: {message}")]
    NumericFailure {
        message: String,
        trace: Option<Box<RefinementTrace>>,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 for data errors, 3 for numeric failures.
    /// Usage errors (exit code 1) are produced by argument parsing, not here.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateMatrix { .. } | Error::NumericFailure { .. } => 3,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::invalid("x").exit_code(), 2);
        assert_eq!(Error::EmptyCorrespondences.exit_code(), 2);
        assert_eq!(Error::DegenerateMatrix { column: 1, norm: 0.0 }.exit_code(), 3);
        let numeric = Error::NumericFailure {
            message: "nan".into(),
            trace: None,
        };
        assert_eq!(numeric.exit_code(), 3);
    }
}
