//! Error types shared across the library.

use std::path::PathBuf;

/// Unified error type for simulation, spectral calculus, and law evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A mathematical argument lies outside the domain of the requested quantity.
    #[error("domain error: {0}")]
    Domain(String),

    /// Arguments are individually valid but jointly unusable (sizes, grids, lags).
    #[error("usage error: {0}")]
    Usage(String),

    /// A run configuration was rejected before any work started.
    #[error("configuration error: {0}")]
    Config(String),

    /// A precondition on the numerical state failed (e.g. colliding eigenvalues).
    #[error("precondition error: {0}")]
    Precondition(String),

    /// An iterative numerical routine failed to reach its target accuracy.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Input data is degenerate for the requested statistic.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// File I/O failure, with the path that caused it.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Persistence decode failure; the message carries line/column context.
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
