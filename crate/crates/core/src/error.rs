use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operands with incompatible dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A request that cannot be satisfied with the given data or network.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite values encountered: {0}")]
    NonFinite(String),

    #[error("{}: wrong magic number {found:#010x}, expected {expected:#010x}", path.display())]
    WrongMagic { path: PathBuf, found: u32, expected: u32 },

    #[error("{}: truncated file ({detail})", path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("{}: image count {1} does not match label count {2}", .0.display())]
    CountMismatch(PathBuf, usize, usize),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
