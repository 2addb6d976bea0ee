//! Variational quantum dynamics of one-dimensional binary mixtures of
//! indistinguishable particles (bosons and/or fermions).
//!
//! The engine expands the mixture state in a two-layer hierarchy: species
//! basis states (orthonormal many-body states of one species, expanded over
//! occupation-number states of time-dependent orbitals) on top, variationally
//! moving orbitals on a DVR grid underneath. Ground states are prepared by
//! imaginary-time relaxation, dynamics follow from coupled equations of
//! motion for the expansion coefficients and both basis layers, and
//! correlations are analyzed through natural species functions and natural
//! orbitals.

extern crate blas_src;

pub mod analysis;
pub mod checkpoint;
pub mod eom;
pub mod error;
pub mod fock;
pub mod grid;
pub mod linalg;
pub mod ode;
pub mod oracle;
pub mod system;
pub mod tensors;
#[cfg(test)]
pub(crate) mod test_util;
pub mod trajectory;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
