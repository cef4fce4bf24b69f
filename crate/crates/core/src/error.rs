use thiserror::Error;

use crate::env2d::EnvState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// The safety index admits no feasible action at this state. After a
    /// successful index validation this must never be observed.
    #[error("no feasible safe action found after {queries} dynamics queries (phi = {phi:.6})")]
    InfeasibleProjection {
        queries: usize,
        phi: f64,
        state: Box<EnvState>,
    },

    #[error("trust-region solver failure: {0}")]
    Solver(String),

    /// A numerical acceptance check (index validation, trajectory
    /// equivalence) did not pass.
    #[error("gate failed: {0}")]
    Gate(String),

    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn at_epoch(self, epoch: usize) -> Self {
        match self {
            e @ Error::Epoch { .. } => e,
            e => Error::Epoch {
                epoch,
                source: Box::new(e),
            },
        }
    }
}
