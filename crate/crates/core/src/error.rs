use thiserror::Error;

/// Errors raised by the samplers, the Gibbs loop and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cholesky decomposition failed at pivot {pivot} (value {value:e})")]
    Decomposition { pivot: usize, value: f64 },

    #[error("numerical failure in {context}: {message}")]
    Numerical { context: String, message: String },

    #[error("kernel `{kernel}` failed at iteration {iteration}: {source}")]
    Kernel {
        kernel: &'static str,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for errors that originate in a decomposition or sampler rather than in the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Decomposition { .. } | Error::Numerical { .. } => true,
            Error::Kernel { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
