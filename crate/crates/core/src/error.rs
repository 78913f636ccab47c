use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error categories, used by the CLI to choose an exit code and by the
/// service to choose an HTTP status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
    Abstention,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("object name must not be empty")]
    EmptyObjectName,

    #[error("duplicate object name `{0}`")]
    DuplicateObject(String),

    #[error("unknown object `{0}`")]
    UnknownObject(String),

    #[error("object ordinal {0} out of range for catalog of {1}")]
    ObjectOutOfRange(usize, usize),

    #[error("pair ({0}, {1}) is not a valid unordered pair")]
    SelfPair(usize, usize),

    #[error("`{0}` cannot be paired with itself")]
    SelfNamedPair(String),

    #[error("pair ({0}, {1}) is not in the pair index")]
    UnknownPair(usize, usize),

    #[error("pair ordinal {0} out of range for {1} pairs")]
    PairOutOfRange(usize, usize),

    #[error("user ordinal {0} out of range for {1} users")]
    UserOutOfRange(usize, usize),

    #[error("rating {0} is outside [0, 1]")]
    RatingOutOfRange(f64),

    #[error("ratings matrix has no known entries")]
    EmptyMatrix,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("invalid arrangement: {0}")]
    Arrangement(String),

    #[error("invalid hierarchy: {0}")]
    Hierarchy(String),

    #[error("no rating available for pair {{{0}, {1}}}")]
    MissingRating(String, String),

    #[error("no prediction available for pairs involving: {}", .0.join(", "))]
    Uncoverable(Vec<String>),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } => ErrorKind::Io,
            Error::NonFinite { .. } => ErrorKind::Numerical,
            Error::Uncoverable(_) => ErrorKind::Abstention,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::parse(line, format!("{other:?}")),
        }
    }
}
