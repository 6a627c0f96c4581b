use std::io;

use thiserror::Error;

pub type Result<T, E = MolError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MolError {
    /// Shapes or component counts do not line up.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A gate produced weights outside the probability simplex.
    #[error("gating error: {0}")]
    Gating(String),

    #[error("index has no materialized average vectors")]
    NotMaterialized,

    /// Index construction rejected the supplied embeddings.
    #[error("index build error: {0}")]
    Build(String),

    #[error("format error at byte {offset} ({section}): {message}")]
    Format {
        offset: usize,
        section: &'static str,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl MolError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        MolError::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        MolError::Argument(msg.into())
    }
}
