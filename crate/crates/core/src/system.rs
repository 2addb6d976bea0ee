//! Physical description of a binary mixture: grid, per-species one-body
//! Hamiltonians and the interaction kernels.

use crate::error::{Error, Result};
use crate::fock::Statistics;
use crate::grid::{
    build_grid, harmonic_potential, kinetic_operator, Grid, InteractionKernel, OneBodyOperator,
};

/// One species of a harmonically trapped mixture.
#[derive(Debug, Clone)]
pub struct HarmonicSpec {
    pub statistics: Statistics,
    pub particles: u32,
    pub mass: f64,
    pub frequency: f64,
    pub offset: f64,
    /// Contact intra-species coupling strength.
    pub g: f64,
}

/// Hamiltonian data of one species.
#[derive(Debug, Clone)]
pub struct SpeciesHamiltonian {
    pub statistics: Statistics,
    pub particles: u32,
    pub mass: f64,
    pub one_body: OneBodyOperator,
    pub intra: Option<InteractionKernel>,
}

/// A binary mixture on a common grid.
#[derive(Debug, Clone)]
pub struct MixtureSystem {
    pub grid: Grid,
    pub a: SpeciesHamiltonian,
    pub b: SpeciesHamiltonian,
    pub inter: Option<InteractionKernel>,
}

impl MixtureSystem {
    /// Harmonically trapped mixture with contact interactions.
    pub fn harmonic(
        grid: Grid,
        spec_a: &HarmonicSpec,
        spec_b: &HarmonicSpec,
        g_ab: f64,
    ) -> Result<Self> {
        let a = harmonic_species(&grid, spec_a)?;
        let b = harmonic_species(&grid, spec_b)?;
        let inter = if g_ab != 0.0 {
            Some(InteractionKernel::contact(g_ab))
        } else {
            None
        };
        Ok(MixtureSystem { grid, a, b, inter })
    }

    /// Same mixture with the trap offsets replaced (the quench operation).
    pub fn with_offsets(
        &self,
        spec_a: &HarmonicSpec,
        spec_b: &HarmonicSpec,
        offset_a: f64,
        offset_b: f64,
        g_ab: f64,
    ) -> Result<Self> {
        let mut qa = spec_a.clone();
        qa.offset = offset_a;
        let mut qb = spec_b.clone();
        qb.offset = offset_b;
        MixtureSystem::harmonic(self.grid.clone(), &qa, &qb, g_ab)
    }

    pub fn species(&self, which: Species) -> &SpeciesHamiltonian {
        match which {
            Species::A => &self.a,
            Species::B => &self.b,
        }
    }
}

fn harmonic_species(grid: &Grid, spec: &HarmonicSpec) -> Result<SpeciesHamiltonian> {
    if spec.particles == 0 {
        return Err(Error::InvalidBasis(
            "species must hold at least one particle".into(),
        ));
    }
    let t = kinetic_operator(grid, spec.mass)?;
    let u = harmonic_potential(grid, spec.offset, spec.frequency)?;
    let one_body = t.add(&u)?;
    let intra = if spec.g != 0.0 && spec.particles > 1 {
        Some(InteractionKernel::contact(spec.g))
    } else {
        None
    };
    Ok(SpeciesHamiltonian {
        statistics: spec.statistics,
        particles: spec.particles,
        mass: spec.mass,
        one_body,
        intra,
    })
}

/// Species selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    A,
    B,
}

impl Species {
    pub fn other(self) -> Species {
        match self {
            Species::A => Species::B,
            Species::B => Species::A,
        }
    }
}

/// Convenience constructor for the default box.
pub fn default_grid() -> Result<Grid> {
    build_grid(8.0, 256)
}
