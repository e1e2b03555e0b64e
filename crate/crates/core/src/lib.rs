//! Donor-recipient compatibility estimation with matching representations.
//!
//! Donors are mapped to a small number of learned types, recipients are
//! embedded so that their distribution does not depend on the donor type they
//! were matched with, and a multi-headed network predicts one outcome per type.

pub mod allocsim;
pub mod baselines;
pub mod datamodel;
pub mod matchrep;
pub mod metrics;
pub mod numkit;
pub mod synthgen;

pub use numkit::NumError;

/// Coarse failure classes, used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Divergence,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("unsupported dataset: {0}")]
    Unsupported(String),
    #[error("cluster {cluster} received no soft-assignment mass")]
    DeadCluster { cluster: usize },
    #[error("usage error: {0}")]
    Usage(String),
    /// The last model state whose losses were all finite is kept when available.
    #[error("training diverged in epoch {epoch}: {message}; try a lower learning rate")]
    Diverged {
        epoch: usize,
        message: String,
        checkpoint: Option<Box<matchrep::MatchRepModel>>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Num(NumError::Divergence(_)) | Error::Diverged { .. } => ErrorKind::Divergence,
            Error::Num(NumError::InvalidInput(_)) | Error::Config(_) | Error::Usage(_) => {
                ErrorKind::Config
            }
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            Error::Json(e) if e.is_io() => ErrorKind::Io,
            Error::Json(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
