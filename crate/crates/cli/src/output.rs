//! Run-directory writers: CSV series, JSON metadata and binary checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mixdyn::checkpoint::write_checkpoint;
use mixdyn::eom::{MixtureState, PropagationStatus};
use mixdyn::system::MixtureSystem;
use mixdyn::trajectory::Trajectory;
use serde_json::json;

use crate::config::RunConfig;

pub struct RunDirectory {
    pub root: PathBuf,
}

impl RunDirectory {
    pub fn create(root: &Path) -> Result<RunDirectory, String> {
        fs::create_dir_all(root).map_err(|e| format!("cannot create {}: {e}", root.display()))?;
        Ok(RunDirectory {
            root: root.to_path_buf(),
        })
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, String> {
        let path = self.root.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| format!("cannot create {}: {e}", path.display()))
    }

    pub fn write_energies(&self, trajectory: &Trajectory) -> Result<(), String> {
        let mut w = self.file("energies.csv")?;
        writeln!(w, "t,energy,norm").map_err(|e| e.to_string())?;
        for s in &trajectory.snapshots {
            writeln!(w, "{:.9},{:.12e},{:.12e}", s.time, s.energy, s.norm)
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn write_populations(&self, trajectory: &Trajectory) -> Result<(), String> {
        let first = match trajectory.snapshots.first() {
            Some(s) => s,
            None => return Ok(()),
        };
        let mut w = self.file("populations.csv")?;
        let mut header = String::from("t");
        for i in 0..first.nat_species_a.len() {
            header += &format!(",lambda_{}", i + 1);
        }
        for i in 0..first.nat_orbitals_a.len() {
            header += &format!(",n_A_{}", i + 1);
        }
        for i in 0..first.nat_orbitals_b.len() {
            header += &format!(",n_B_{}", i + 1);
        }
        writeln!(w, "{header}").map_err(|e| e.to_string())?;
        for s in &trajectory.snapshots {
            let mut line = format!("{:.9}", s.time);
            for v in s
                .nat_species_a
                .iter()
                .chain(s.nat_orbitals_a.iter())
                .chain(s.nat_orbitals_b.iter())
            {
                line += &format!(",{v:.12e}");
            }
            writeln!(w, "{line}").map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn write_density_file(
        &self,
        name: &str,
        grid_points: &[f64],
        rows: impl Iterator<Item = (f64, Vec<f64>)>,
    ) -> Result<(), String> {
        let mut w = self.file(name)?;
        let mut header = String::from("t");
        for x in grid_points {
            header += &format!(",{x:.6}");
        }
        writeln!(w, "{header}").map_err(|e| e.to_string())?;
        for (t, values) in rows {
            let mut line = format!("{t:.9}");
            for v in values {
                line += &format!(",{v:.12e}");
            }
            writeln!(w, "{line}").map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn write_densities(
        &self,
        trajectory: &Trajectory,
        system: &MixtureSystem,
    ) -> Result<(), String> {
        let points: Vec<f64> = system.grid.points().iter().copied().collect();
        self.write_density_file(
            "density_A.csv",
            &points,
            trajectory
                .snapshots
                .iter()
                .map(|s| (s.time, s.density_a.to_vec())),
        )?;
        self.write_density_file(
            "density_B.csv",
            &points,
            trajectory
                .snapshots
                .iter()
                .map(|s| (s.time, s.density_b.to_vec())),
        )
    }

    pub fn write_schmidt_layers(
        &self,
        trajectory: &Trajectory,
        system: &MixtureSystem,
    ) -> Result<(), String> {
        let first = match trajectory.snapshots.first() {
            Some(s) => s,
            None => return Ok(()),
        };
        let layer_count = match &first.schmidt_layers_a {
            Some(layers) => layers.len(),
            None => return Ok(()),
        };
        let points: Vec<f64> = system.grid.points().iter().copied().collect();
        for k in 0..layer_count {
            for (species, pick) in [
                ("A", true),
                ("B", false),
            ] {
                let name = format!("schmidt_layer_{}_{}.csv", k + 1, species);
                self.write_density_file(
                    &name,
                    &points,
                    trajectory.snapshots.iter().filter_map(move |s| {
                        let layers = if pick {
                            s.schmidt_layers_a.as_ref()
                        } else {
                            s.schmidt_layers_b.as_ref()
                        };
                        layers.map(|l| (s.time, l[k].to_vec()))
                    }),
                )?;
            }
        }
        Ok(())
    }

    pub fn write_checkpoints(
        &self,
        trajectory: &Trajectory,
        final_state: &MixtureState,
        system: &MixtureSystem,
    ) -> Result<(), String> {
        let dir = self.root.join("checkpoints");
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        for (idx, state) in trajectory.checkpoints.iter().enumerate() {
            let path = dir.join(format!("chk_{idx:06}.bin"));
            write_checkpoint(&path, state, system).map_err(|e| e.to_string())?;
        }
        write_checkpoint(&self.root.join("final_state.bin"), final_state, system)
            .map_err(|e| e.to_string())
    }

    pub fn write_relaxed_state(
        &self,
        state: &MixtureState,
        system: &MixtureSystem,
    ) -> Result<(), String> {
        write_checkpoint(&self.root.join("relaxed.bin"), state, system).map_err(|e| e.to_string())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn write_metadata(
        &self,
        config: &RunConfig,
        threads: usize,
        status: Option<&PropagationStatus>,
        trajectory: Option<&Trajectory>,
        relax_energy: Option<f64>,
        error: Option<&str>,
        resumed_from: Option<&Path>,
    ) -> Result<(), String> {
        let invariants = trajectory.map(|t| {
            let min_eta = t
                .snapshots
                .iter()
                .map(|s| s.min_eta_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            let min_rho = t
                .snapshots
                .iter()
                .map(|s| s.min_rho_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            json!({
                "max_norm_drift": t.max_norm_drift(),
                "max_relative_energy_drift": t.max_energy_drift(),
                "min_species_density_eigenvalue": min_eta,
                "min_particle_density_eigenvalue": min_rho,
                "steps_accepted": t.stats.steps_accepted,
                "steps_rejected": t.stats.steps_rejected,
                "rhs_evaluations": t.stats.rhs_evaluations,
            })
        });
        let status_text = status.map(|s| match s {
            PropagationStatus::Completed => "completed".to_string(),
            PropagationStatus::StepUnderflow { time } => {
                format!("step_underflow at t = {time:.6}")
            }
            PropagationStatus::InvariantViolation { time, what } => {
                format!("invariant_violation at t = {time:.6}: {what}")
            }
        });
        let doc = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "label": config.label(),
            "threads": threads,
            "config": config,
            "status": status_text,
            "relax_energy": relax_energy,
            "invariants": invariants,
            "error": error,
            "resumed_from": resumed_from.map(|p| p.display().to_string()),
        });
        let mut w = self.file("metadata.json")?;
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| e.to_string())?;
        writeln!(w).map_err(|e| e.to_string())?;
        Ok(())
    }
}
