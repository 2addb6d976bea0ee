//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix not hermitian: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("state not normalized: {0}")]
    NotNormalized(String),
    #[error("orbital index {index} out of range for {count} orbitals")]
    OrbitalIndex { index: usize, count: usize },
    #[error("relaxation did not converge: energy rate {last_rate:.3e} after imaginary time {elapsed:.3}")]
    RelaxationStalled { elapsed: f64, last_rate: f64 },
    #[error("propagation aborted at t = {time:.6}: {reason}")]
    PropagationAborted { time: f64, reason: String },
    #[error("step size underflow at t = {time:.6} (h = {step:.3e})")]
    StepUnderflow { time: f64, step: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("linear algebra backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
