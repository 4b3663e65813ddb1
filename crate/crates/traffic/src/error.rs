use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input file does not follow the expected CSV schema.
    #[error("{source_name}:{line}: {message}")]
    Schema { source_name: String, line: u64, message: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no usable data: {0}")]
    NoData(String),

    #[error(transparent)]
    Numeric(#[from] pec_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Schema { .. } | Error::Io { .. } | Error::NoData(_) | Error::Json(_) | Error::Csv(_) => 2,
            Error::Numeric(pec_core::Error::InvalidArgument(_)) => 1,
            Error::Numeric(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
