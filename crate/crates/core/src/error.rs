use std::path::PathBuf;

/// Errors produced by the clustering library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller supplied an argument outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data could not be parsed or is internally inconsistent.
    #[error("{path}:{line}: {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },

    /// Input data is inconsistent across files.
    #[error("inconsistent dataset: {0}")]
    Dataset(String),

    /// A message value became NaN or infinite.
    #[error("message passing diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    /// The run terminated without any exemplar.
    #[error("no exemplar emerged after {iterations} iterations")]
    NonConvergence { iterations: usize },

    /// The requested number of clusters could not be reached.
    #[error("preference calibration failed for K={target}: closest achieved K={closest} ({reason})")]
    Calibration {
        target: usize,
        closest: usize,
        reason: String,
    },

    /// Brute-force enumeration refused an instance that is too large.
    #[error("instance too large for exhaustive search: n={n} (max {max})")]
    TooLarge { n: usize, max: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
