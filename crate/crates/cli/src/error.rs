use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure at frame {frame}, bin {bin}: {msg}")]
    Numeric {
        frame: usize,
        bin: usize,
        msg: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric { .. } => 4,
        })
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Numeric { frame, bin, msg } => CliError::Numeric {
                frame,
                bin,
                msg: format!("{p}: {msg}"),
            },
        }
    }
}

impl From<kfwpe::Error> for CliError {
    fn from(e: kfwpe::Error) -> Self {
        match e {
            kfwpe::Error::Config(m) => CliError::Config(m),
            kfwpe::Error::Numeric { frame, bin, msg } => CliError::Numeric { frame, bin, msg },
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<hound::Error> for CliError {
    fn from(e: hound::Error) -> Self {
        CliError::Data(format!("wav: {e}"))
    }
}
