//! Run configuration: JSON file with system, truncation, propagation and
//! analysis blocks plus a seed for the deterministic relaxation perturbation.

use std::path::Path;

use mixdyn::eom::Truncation;
use mixdyn::fock::{enumerate_basis, Statistics};
use mixdyn::grid::{build_grid, Grid};
use mixdyn::system::{HarmonicSpec, MixtureSystem};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticsName {
    Boson,
    Fermion,
}

impl From<StatisticsName> for Statistics {
    fn from(s: StatisticsName) -> Statistics {
        match s {
            StatisticsName::Boson => Statistics::Boson,
            StatisticsName::Fermion => Statistics::Fermion,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemBlock {
    pub statistics_a: StatisticsName,
    pub statistics_b: StatisticsName,
    pub n_a: u32,
    pub n_b: u32,
    #[serde(default = "one")]
    pub mass_a: f64,
    #[serde(default = "one")]
    pub mass_b: f64,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub offset_a: f64,
    #[serde(default)]
    pub offset_b: f64,
    #[serde(default)]
    pub g_a: f64,
    #[serde(default)]
    pub g_b: f64,
    #[serde(default)]
    pub g_ab: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationBlock {
    pub species_states: usize,
    pub orbitals_a: usize,
    pub orbitals_b: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagationBlock {
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_initial_step")]
    pub initial_step: f64,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub output_stride: f64,
    /// Snapshots between binary checkpoints (0 disables periodic checkpoints).
    #[serde(default = "default_checkpoint_stride")]
    pub checkpoint_stride: usize,
    #[serde(default = "default_relax_rate")]
    pub relax_energy_rate_tol: f64,
    #[serde(default = "default_relax_time")]
    pub relax_max_imaginary_time: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalysisBlock {
    /// Emit NSF-resolved density layers as schmidt_layer_k CSV files.
    #[serde(default)]
    pub schmidt_layers: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemBlock,
    pub truncation: TruncationBlock,
    pub propagation: PropagationBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn default_grid_points() -> usize {
    256
}
fn default_half_width() -> f64 {
    8.0
}
fn default_tol() -> f64 {
    1e-8
}
fn default_initial_step() -> f64 {
    1e-3
}
fn default_max_step() -> f64 {
    0.05
}
fn default_stride() -> f64 {
    0.05
}
fn default_checkpoint_stride() -> usize {
    50
}
fn default_relax_rate() -> f64 {
    1e-9
}
fn default_relax_time() -> f64 {
    400.0
}
fn default_seed() -> u64 {
    1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| format!("config parse error: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    /// The derived orbital-configuration label M-(m_A,m_B).
    pub fn label(&self) -> String {
        format!(
            "{}-({},{})",
            self.truncation.species_states, self.truncation.orbitals_a, self.truncation.orbitals_b
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        let s = &self.system;
        let t = &self.truncation;
        if s.n_a == 0 || s.n_b == 0 {
            return Err("both species need at least one particle".into());
        }
        if s.mass_a <= 0.0 || s.mass_b <= 0.0 || s.omega <= 0.0 {
            return Err("masses and trap frequency must be positive".into());
        }
        for (stats, n, m, name) in [
            (s.statistics_a, s.n_a, t.orbitals_a, "A"),
            (s.statistics_b, s.n_b, t.orbitals_b, "B"),
        ] {
            if stats == StatisticsName::Fermion && m < n as usize {
                return Err(format!(
                    "fermionic species {name} needs at least {n} orbitals, got {m}"
                ));
            }
            if m == 0 {
                return Err(format!("species {name} needs at least one orbital"));
            }
        }
        let k_a = enumerate_basis(s.statistics_a.into(), s.n_a, t.orbitals_a)
            .map_err(|e| e.to_string())?
            .len();
        let k_b = enumerate_basis(s.statistics_b.into(), s.n_b, t.orbitals_b)
            .map_err(|e| e.to_string())?
            .len();
        if t.species_states == 0 || t.species_states > k_a.min(k_b) {
            return Err(format!(
                "species_states must lie in 1..={} (min of K_A = {k_a}, K_B = {k_b})",
                k_a.min(k_b)
            ));
        }
        if t.grid_points < 8 || t.half_width <= 0.0 {
            return Err("grid needs at least 8 points and a positive half width".into());
        }
        if t.orbitals_a > t.grid_points || t.orbitals_b > t.grid_points {
            return Err("orbital counts cannot exceed the number of grid points".into());
        }
        let p = &self.propagation;
        if p.abs_tol <= 0.0 || p.rel_tol <= 0.0 {
            return Err("tolerances must be positive".into());
        }
        if p.t_final <= 0.0 || p.output_stride <= 0.0 {
            return Err("final time and output stride must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, String> {
        build_grid(self.truncation.half_width, self.truncation.grid_points)
            .map_err(|e| e.to_string())
    }

    pub fn harmonic_spec_a(&self, offset: f64) -> HarmonicSpec {
        HarmonicSpec {
            statistics: self.system.statistics_a.into(),
            particles: self.system.n_a,
            mass: self.system.mass_a,
            frequency: self.system.omega,
            offset,
            g: self.system.g_a,
        }
    }

    pub fn harmonic_spec_b(&self, offset: f64) -> HarmonicSpec {
        HarmonicSpec {
            statistics: self.system.statistics_b.into(),
            particles: self.system.n_b,
            mass: self.system.mass_b,
            frequency: self.system.omega,
            offset,
            g: self.system.g_b,
        }
    }

    /// System with the configured (relaxation) trap offsets.
    pub fn relax_system(&self) -> Result<MixtureSystem, String> {
        MixtureSystem::harmonic(
            self.grid()?,
            &self.harmonic_spec_a(self.system.offset_a),
            &self.harmonic_spec_b(self.system.offset_b),
            self.system.g_ab,
        )
        .map_err(|e| e.to_string())
    }

    /// System after the quench: both trap offsets at zero.
    pub fn quenched_system(&self) -> Result<MixtureSystem, String> {
        MixtureSystem::harmonic(
            self.grid()?,
            &self.harmonic_spec_a(0.0),
            &self.harmonic_spec_b(0.0),
            self.system.g_ab,
        )
        .map_err(|e| e.to_string())
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            species_states: self.truncation.species_states,
            orbitals_a: self.truncation.orbitals_a,
            orbitals_b: self.truncation.orbitals_b,
        }
    }
}
