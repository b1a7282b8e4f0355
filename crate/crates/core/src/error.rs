use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    SolverNotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("fixed time step {dt:.6e} violates the transport stability bound {limit:.6e} (limiting outflow speed {speed:.6e} at cell {cell})")]
    CflViolation {
        dt: f64,
        limit: f64,
        speed: f64,
        cell: usize,
    },

    #[error("negative {field} = {value:.6e} at cell {cell} (scale {scale:.6e})")]
    NegativeDensity {
        field: &'static str,
        value: f64,
        cell: usize,
        scale: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("diagnostics format error: {0}")]
    Diagnostics(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
