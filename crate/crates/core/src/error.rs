use thiserror::Error;

/// Errors raised by every pipeline in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("model has {bits} stochastic noise bits; exact enumeration supports at most {limit}")]
    Capacity { bits: usize, limit: usize },

    #[error("degenerate event: {0}")]
    DegenerateEvent(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("collinear design matrix (condition number {condition:.3e})")]
    Collinearity { condition: f64 },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("pinpointability failed: max posterior variance {max_variance:.4e} is not below {threshold:.4e}")]
    Pinpointability { max_variance: f64, threshold: f64 },

    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        /// JSON snapshot of the iterate that produced the failure, when available.
        dump: Option<String>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            dump: None,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. }
            | Error::Collinearity { .. }
            | Error::DegenerateModel(_)
            | Error::DegenerateData(_) => 3,
            _ => 2,
        }
    }
}
