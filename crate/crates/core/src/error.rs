use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the mesh, finite element, POD and time-stepping layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("mesh validation failed: {0}")]
    MeshValidation(String),

    #[error("linear solver failed{}: {message}", step_suffix(*.step))]
    Solver { step: Option<usize>, message: String },

    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },

    #[error("fixed-point iteration diverged in bootstrap step (residual {first:e} -> {second:e})")]
    BootstrapDivergence { first: f64, second: f64 },

    #[error("requested {requested} POD modes but only {available} are above the eigenvalue cutoff")]
    Rank { requested: usize, available: usize },

    #[error("basis is not discretely divergence free: |B phi_{index}| = {residual:e}")]
    BasisConsistency { index: usize, residual: f64 },

    #[error("POD basis is not orthonormal: |M_R - I| = {deviation:e}")]
    Orthonormality { deviation: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} did not converge after {1} iterations")]
    NoConvergence(&'static str, usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

impl Error {
    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::MeshValidation(_)
                | Error::Rank { .. }
                | Error::Dimension(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
