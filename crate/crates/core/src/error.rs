use std::path::PathBuf;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A matrix entry was NaN or infinite.
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    /// Dense SVD or eigen iteration hit its iteration cap.
    #[error("{0} did not converge within the iteration cap")]
    NoConvergence(&'static str),

    /// Power iteration did not settle, or settled on different fixed points
    /// from different starts.
    #[error("chain looks non-ergodic: {0}")]
    NonErgodic(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Generator could not produce a valid instance.
    #[error("construction failed: {0}")]
    Construction(String),

    /// Malformed text input.
    #[error("{}line {line}: {msg}", source_prefix(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        msg: String,
    },

    /// Bad configuration key or value.
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn source_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
