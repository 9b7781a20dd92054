use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("dynamics error: {0}")]
    Dynamics(String),
    #[error("control error: {0}")]
    Control(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("collection error: {0}")]
    Collection(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
