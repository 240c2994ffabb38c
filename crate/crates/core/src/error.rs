use thiserror::Error;

use crate::harness::EpisodeLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular calibration: the two load points have equal strain ({strain})")]
    SingularCalibration { strain: f64 },

    #[error("integrator diverged at plant step {step} (t = {time_s:.6} s)")]
    Divergence { step: u64, time_s: f64 },

    #[error("controller fault on channel {channel}: {reason}")]
    ControllerFault { channel: usize, reason: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("self-sensing feedback requires a trained estimator model")]
    Untrained,

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("model file: {0}")]
    Model(String),

    #[error("episode aborted after {} ticks: {cause}", partial.len())]
    Aborted {
        partial: Box<EpisodeLog>,
        cause: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: msg.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by a
    /// runtime fault.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Model(_) | Error::Untrained)
    }
}
