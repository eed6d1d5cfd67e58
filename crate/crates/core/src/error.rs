use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("waypoint index {index} out of range for horizon {horizon}")]
    Range { index: usize, horizon: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite state at integration step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at step {step}; last finite loss {last_loss} at step {last_finite_step}")]
    Diverged {
        step: usize,
        last_finite_step: usize,
        last_loss: f64,
    },

    #[error("phi is undefined at t = {0} (requires 0 <= t < 1)")]
    PhiDomain(f64),

    #[error("constraint infeasible: gradient vanishes with a = {a}")]
    DegenerateBarrier { a: f64 },

    #[error("QP did not converge after {iterations} working-set changes (primal residual {primal})")]
    QpNonConvergence { iterations: usize, primal: f64 },

    #[error("QP failed at waypoint {waypoint}, t = {t}: {source}")]
    WaypointQp {
        waypoint: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("terminal projection left waypoint {waypoint} infeasible (min h = {min_h}) after {iterations} iterations")]
    ProjectionFailed {
        waypoint: usize,
        min_h: f64,
        iterations: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
