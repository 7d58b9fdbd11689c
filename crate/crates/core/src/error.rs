use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Index(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error at `{key}`: {msg}")]
    Schema { key: String, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("buffer availability violation: {0}")]
    Availability(String),

    #[error("divergence at iteration {iteration}: state norm {norm:e}")]
    Divergence { iteration: usize, norm: f64 },

    #[error("step sizes not certified: {0}")]
    Uncertified(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the command line: 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_)
            | Error::Availability(_)
            | Error::Divergence { .. } => 2,
            _ => 1,
        }
    }
}
