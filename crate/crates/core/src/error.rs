use std::path::PathBuf;

use thiserror::Error;

use crate::judge::JudgeError;
use crate::ledger::ComparisonRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance has no unique undominated policy")]
    NoUniqueBest,

    #[error("policy {policy} is beaten by nobody; characteristic time is infinite")]
    InfiniteCharacteristicTime { policy: usize },

    #[error("Newton solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence {
        iterations: usize,
        grad_norm: f64,
        iterate: Vec<f64>,
    },

    #[error("information matrix is numerically singular along {direction:?}")]
    SingularInformation { direction: Vec<f64> },

    #[error("allocation is not on the simplex (sum {sum}, min {min})")]
    NotOnSimplex { sum: f64, min: f64 },

    #[error("score argmax is not unique (policies {first} and {second})")]
    NonUniqueScoreArgmax { first: usize, second: usize },

    #[error("design objective became NaN at iterate {iterate:?}")]
    NanObjective { iterate: Vec<f64> },

    #[error("threshold requested at t = {t} before the gate onset t0 = {t0}")]
    BeforeOnset { t: u64, t0: u64 },

    #[error(transparent)]
    Judge(#[from] JudgeError),

    /// A judge failed mid-run; `records` holds the comparisons made so far.
    #[error("run aborted at t = {t}: {source}")]
    RunAborted {
        t: u64,
        records: Vec<ComparisonRecord>,
        #[source]
        source: JudgeError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{failed} of {reps} replications failed for method {method}")]
    BenchFailed {
        method: String,
        failed: usize,
        reps: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
