use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A recursion produced or received a non-finite value, or its gain
    /// denominator left the positive reals.
    #[error("numeric failure at frame {frame}, bin {bin}: {msg}")]
    Numeric {
        frame: usize,
        bin: usize,
        msg: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("weight container format error{}: {msg}", tensor.as_ref().map(|t| format!(" in tensor `{t}`")).unwrap_or_default())]
    Format { tensor: Option<String>, msg: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(tensor: Option<&str>, msg: impl Into<String>) -> Self {
        Error::Format {
            tensor: tensor.map(str::to_owned),
            msg: msg.into(),
        }
    }
}
