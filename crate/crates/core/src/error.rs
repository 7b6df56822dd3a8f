use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DhmmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every state assigns zero mass to the observations at `timestep`.
    #[error("numerical underflow: total forward mass is zero at timestep {timestep}{}",
        .sequence.map(|n| format!(" of sequence {n}")).unwrap_or_default())]
    Underflow {
        timestep: usize,
        sequence: Option<usize>,
    },

    #[error("singular kernel matrix: {0}")]
    Singular(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl DhmmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DhmmError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DhmmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        DhmmError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Attach a sequence index to an underflow raised by per-sequence inference.
    pub(crate) fn in_sequence(self, n: usize) -> Self {
        match self {
            DhmmError::Underflow { timestep, .. } => DhmmError::Underflow {
                timestep,
                sequence: Some(n),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, DhmmError>;
