use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical core and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("hamiltonian solve did not converge (p = {p}, z = {z})")]
    HamiltonianNonConvergence { p: f64, z: f64 },

    #[error("pool depletion: {0}")]
    Depletion(String),

    #[error("invariant solve did not converge: {0}")]
    InvariantNonConvergence(String),

    #[error("HJB Newton iteration did not converge at time step {step} (update {update:e})")]
    HjbNonConvergence { step: usize, update: f64 },

    #[error("non-finite value in HJB solution at time step {step}")]
    HjbNonFinite { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown strategy kind `{0}`")]
    UnknownStrategy(String),

    #[error("simulation failed on path {path} (seed {seed}): {source}")]
    Path {
        path: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("corrupt cache file {path}: {reason}")]
    CorruptCache { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numerical routines rather than by
    /// user input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::HamiltonianNonConvergence { .. }
            | Error::InvariantNonConvergence(_)
            | Error::HjbNonConvergence { .. }
            | Error::HjbNonFinite { .. }
            | Error::Depletion(_) => true,
            Error::Path { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
