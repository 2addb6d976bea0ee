//! Time series of observables recorded along a propagation, plus checkpoint
//! states at a configurable stride.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::analysis::{
    center_of_mass, natural_orbitals, natural_species, one_body_density, schmidt_layers,
};
use crate::eom::{evaluate, EomSpaces, MixtureState, RegularizationPolicy};
use crate::error::Result;
use crate::system::MixtureSystem;
use crate::tensors::{species_densities, weighted_one_body};

/// Observables of one output time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub energy: f64,
    pub norm: f64,
    pub density_a: Array1<f64>,
    pub density_b: Array1<f64>,
    /// Natural species populations from the A- and B-side reduced density
    /// matrices (they coincide for a binary mixture up to roundoff).
    pub nat_species_a: Vec<f64>,
    pub nat_species_b: Vec<f64>,
    pub nat_orbitals_a: Vec<f64>,
    pub nat_orbitals_b: Vec<f64>,
    pub com_a: f64,
    pub com_b: f64,
    /// NSF-resolved weighted density layers lambda_k rho_k(x).
    pub schmidt_layers_a: Option<Vec<Array1<f64>>>,
    pub schmidt_layers_b: Option<Vec<Array1<f64>>>,
    /// Mode carriers for continuity ordering; dropped on older snapshots.
    pub nsf_modes: Option<Array2<C64>>,
    pub no_modes_a: Option<Array2<C64>>,
    pub no_modes_b: Option<Array2<C64>>,
    pub min_eta_eigenvalue: f64,
    pub min_rho_eigenvalue: f64,
}

/// Integrator statistics of a finished propagation.
#[derive(Debug, Clone, Default)]
pub struct PropagationStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
    pub energy_reference: f64,
}

/// Recorded history of one propagation.
#[derive(Debug, Default)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub checkpoints: Vec<MixtureState>,
    pub stats: PropagationStats,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory::default()
    }

    pub fn push(&mut self, snapshot: Snapshot, checkpoint: Option<MixtureState>) {
        // strip the mode carriers of the now-superseded previous snapshot
        if let Some(prev) = self.snapshots.last_mut() {
            prev.nsf_modes = None;
            prev.no_modes_a = None;
            prev.no_modes_b = None;
        }
        self.snapshots.push(snapshot);
        if let Some(state) = checkpoint {
            self.checkpoints.push(state);
        }
    }

    pub fn last_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn set_stats(&mut self, stats: PropagationStats) {
        self.stats = stats;
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Maximum |norm - 1| over the recorded snapshots.
    pub fn max_norm_drift(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| (s.norm - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Maximum relative energy drift against the first snapshot.
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = match self.snapshots.first() {
            Some(s) => s.energy,
            None => return 0.0,
        };
        let scale = e0.abs().max(1e-12);
        self.snapshots
            .iter()
            .map(|s| (s.energy - e0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Record the observables of a state. `previous` supplies the mode carriers
/// for continuity ordering of near-degenerate populations.
pub fn snapshot(
    state: &MixtureState,
    system: &MixtureSystem,
    spaces: &EomSpaces,
    record_layers: bool,
    previous: Option<&Snapshot>,
) -> Result<Snapshot> {
    let grid = &system.grid;
    let norm = state.norm();
    let (_, diag) = evaluate(state, system, spaces, &RegularizationPolicy::default())?;

    let top_n = state.top.mapv(|z| z / norm);
    let eta = species_densities(&top_n.view())?;
    let d1a = spaces.a.one_body_tensor(&state.coeff_a.view());
    let d1b = spaces.b.one_body_tensor(&state.coeff_b.view());
    let rho1_a = weighted_one_body(&eta.eta1_a.view(), &d1a);
    let rho1_b = weighted_one_body(&eta.eta1_b.view(), &d1b);

    let density_a = one_body_density(&rho1_a.view(), &state.orbitals_a.view());
    let density_b = one_body_density(&rho1_b.view(), &state.orbitals_b.view());

    let mut nsf_a = natural_species(&eta.eta1_a.view())?;
    let nsf_b = natural_species(&eta.eta1_b.view())?;
    let mut no_a = natural_orbitals(&rho1_a.view(), &state.orbitals_a.view())?;
    let mut no_b = natural_orbitals(&rho1_b.view(), &state.orbitals_b.view())?;
    if let Some(prev) = previous {
        if let Some(modes) = &prev.nsf_modes {
            nsf_a.reorder_for_continuity(&modes.view(), 1.0);
        }
        if let Some(modes) = &prev.no_modes_a {
            no_a.reorder_for_continuity(&modes.view(), grid.spacing());
        }
        if let Some(modes) = &prev.no_modes_b {
            no_b.reorder_for_continuity(&modes.view(), grid.spacing());
        }
    }

    let (layers_a, layers_b) = if record_layers {
        let mut normalized = state.clone();
        normalized.top.mapv_inplace(|z| z / norm);
        let record = schmidt_layers(&normalized, spaces)?;
        (record.layers_a, record.layers_b)
    } else {
        (None, None)
    };

    Ok(Snapshot {
        time: state.time,
        energy: diag.energy,
        norm,
        com_a: center_of_mass(&density_a.view(), grid),
        com_b: center_of_mass(&density_b.view(), grid),
        density_a,
        density_b,
        nat_species_b: nsf_b.populations.clone(),
        nat_orbitals_a: no_a.populations.clone(),
        nat_orbitals_b: no_b.populations.clone(),
        nat_species_a: nsf_a.populations.clone(),
        schmidt_layers_a: layers_a,
        schmidt_layers_b: layers_b,
        nsf_modes: Some(nsf_a.modes),
        no_modes_a: Some(no_a.modes),
        no_modes_b: Some(no_b.modes),
        min_eta_eigenvalue: diag.min_eta_eigenvalue,
        min_rho_eigenvalue: diag.min_rho_eigenvalue,
    })
}
