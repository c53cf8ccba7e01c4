use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the prediction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for grid of {count} points")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("crf {crf} is not a grid point in [{min}, {max}] step {step}")]
    OffGrid { crf: f64, min: f64, max: f64, step: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("parse error at {context}: {msg}")]
    Parse { context: String, msg: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("degenerate anchor: {0}")]
    DegenerateAnchor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), msg: msg.into() }
    }

    /// Process exit code class for the CLI: 2 for data/schema problems,
    /// 3 for backend problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend(_) => 3,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Shape(_)
            | Error::Numeric(_)
            | Error::Io(_) => 2,
            _ => 1,
        }
    }
}
