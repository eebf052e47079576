use thiserror::Error;

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("index {index} out of range for `{table}` with {rows} rows")]
    Index { table: String, index: usize, rows: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown parameter tensor `{0}`")]
    MissingParam(String),

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("malformed word-vector file at line {line}: {msg}")]
    WordVectors { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
