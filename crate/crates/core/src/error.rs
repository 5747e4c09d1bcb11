use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid DSL: {0}")]
    InvalidDsl(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("skeleton does not align with query: {0}")]
    Alignment(String),

    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },

    #[error("no negatives available")]
    NoNegatives,

    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("k-means needs {clusters} clusters but only {items} items were given")]
    TooManyClusters { clusters: usize, items: usize },

    #[error("no candidates")]
    NoCandidates,

    #[error("generator error: {0}")]
    Generator(String),

    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn stage(stage: &'static str, message: impl std::fmt::Display) -> Self {
        Error::Stage {
            stage,
            message: message.to_string(),
        }
    }
}
