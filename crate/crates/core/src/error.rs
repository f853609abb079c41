use thiserror::Error;

/// Errors raised by the decipherment library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: input is not valid UTF-8")]
    Decode { line: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("token {0:?} is not in the vocabulary")]
    Consistency(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("index {index} out of range for size {size}")]
    Index { index: usize, size: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("enumeration too large: {0}")]
    Size(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("training diverged at iteration {iteration}: non-finite weight")]
    Divergence { iteration: usize },

    #[error("gold lexicon does not cover: {}", .0.join(", "))]
    Coverage(Vec<String>),

    #[error("source token {0:?} is out of vocabulary")]
    Oov(String),

    #[error("cipher generation failed: {0}")]
    Generation(String),

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
