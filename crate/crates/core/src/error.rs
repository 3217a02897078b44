use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("total dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("{name} is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { name: String, asymmetry: f64 },

    #[error("kernel is not positive semidefinite (min eigenvalue {min:.3e}, max eigenvalue {max:.3e})")]
    NotPositiveSemidefinite { min: f64, max: f64 },

    #[error("coupling does not commute with the system Hamiltonian (‖[L,H]‖ = {norm:.3e}, limit {limit:.3e})")]
    NonCommuting { norm: f64, limit: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("Fock truncation leak: mode {mode} top-level population {population:.3e} exceeds {limit:.3e}")]
    FockLeak { mode: usize, population: f64, limit: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory { index: u64, source: Box<Error> },

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config schema violation at `{path}`: {message}")]
    ConfigSchema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
