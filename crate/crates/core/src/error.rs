use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("bracket parse error at offset {offset}: {message}")]
    Bracket { offset: usize, message: String },

    #[error("malformed symbol sequence: {0}")]
    MalformedSequence(String),

    #[error("preterminal count {preterminals} does not match word count {words}")]
    ArityMismatch { preterminals: usize, words: usize },

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("grammar error: {0}")]
    Grammar(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sentence {index}: {message}")]
    Alignment { index: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn dim_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Dimension {
        op,
        detail: detail.into(),
    })
}
