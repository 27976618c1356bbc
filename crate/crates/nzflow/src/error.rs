use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("invalid kernel: {0}")]
    Validate(String),

    #[error("unknown builtin kernel `{0}`")]
    UnknownBuiltin(String),

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error("structure: {0}")]
    Structure(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("integer overflow evaluating `{0}`")]
    Overflow(String),

    #[error("code generation: {0}")]
    Codegen(String),

    #[error("execution: {0}")]
    Exec(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
