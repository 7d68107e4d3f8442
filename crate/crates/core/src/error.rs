use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("sinkhorn scaling failed: {0}")]
    Sinkhorn(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schedule training diverged at iteration {iteration}: loss {previous:e} -> {current:e}")]
    TrainingDiverged {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("station {station}: design matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { station: usize, condition: f64 },

    #[error("global objective not strongly convex (smallest aggregate Hessian eigenvalue {0:e})")]
    NotStronglyConvex(f64),

    #[error("infeasible geometry after {attempts} attempts: station {station} ({reason})")]
    Geometry {
        station: usize,
        attempts: usize,
        reason: String,
    },

    #[error("non-finite state at iteration {0}")]
    NonFinite(usize),

    #[error("diffusion diverged at iteration {iteration}: msd {current:e} exceeds 10x the value {previous:e} at iteration {since}")]
    Diverged {
        iteration: usize,
        since: usize,
        previous: f64,
        current: f64,
    },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<String>,
        line: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
