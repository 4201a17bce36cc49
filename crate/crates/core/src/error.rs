use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes incompatible with an op's signature.
    #[error("shape error at {node}: {detail}")]
    Shape { node: String, detail: String },

    /// An op produced NaN or an infinity.
    #[error("non-finite value produced by {node}")]
    NonFinite { node: String },

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at byte offset {offset}: {detail}")]
    Parse { offset: usize, detail: String },

    #[error("config error for key `{key}`: {detail}")]
    Config { key: String, detail: String },

    /// Two artifacts that must agree (checkpoint and sidecar, model and dataset) do not.
    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    /// Training blew up; parameters were rolled back to the last finite state.
    #[error("training diverged at {at}: {detail}")]
    Diverged { at: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn shape(node: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            node: node.into(),
            detail: detail.into(),
        }
    }

    pub fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
