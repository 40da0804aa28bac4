use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A function was called outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The data violates a structural rule (duplicate ids, k > n, too few studies, ...).
    #[error("{0}")]
    Data(String),

    /// A row of a delimited input file could not be interpreted.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    /// A covariance block has a non-positive diagonal.
    #[error("singular covariance block in study '{0}'")]
    SingularBlock(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("variance component optimizer did not converge: {0}")]
    Convergence(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("schema: {0}")]
    Schema(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Convergence,
    RankDeficient,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Convergence(_) => ErrorKind::Convergence,
            Error::RankDeficient(_) => ErrorKind::RankDeficient,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
