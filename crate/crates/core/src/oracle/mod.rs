//! Independent brute-force references used to cross-check the variational
//! engine: dense ladder operators, exact two-particle grid propagation,
//! full configuration interaction in a fixed harmonic basis and a split-step
//! mean-field solver.

pub mod fullci;
pub mod ladder;
pub mod meanfield;
pub mod two_particle;
