//! End-to-end relaxation and propagation checks on small systems.

use mixdyn::analysis::center_of_mass;
use mixdyn::eom::{
    propagate, relax, EomSpaces, PropagationConfig, PropagationMode, PropagationStatus,
    RelaxOptions, Truncation,
};
use mixdyn::fock::Statistics;
use mixdyn::grid::build_grid;
use mixdyn::system::{HarmonicSpec, MixtureSystem};

fn spec(statistics: Statistics, particles: u32, offset: f64, g: f64) -> HarmonicSpec {
    HarmonicSpec {
        statistics,
        particles,
        mass: 1.0,
        frequency: 1.0,
        offset,
        g,
    }
}

#[test]
fn ideal_relaxation_energies_are_exact() {
    let grid = build_grid(6.0, 96).unwrap();
    // two ideal bosons (species A) and two ideal fermions (species B)
    let system = MixtureSystem::harmonic(
        grid,
        &spec(Statistics::Boson, 2, 0.0, 0.0),
        &spec(Statistics::Fermion, 2, 0.0, 0.0),
        0.0,
    )
    .unwrap();
    let truncation = Truncation {
        species_states: 1,
        orbitals_a: 1,
        orbitals_b: 2,
    };
    let spaces = EomSpaces::new(&system, 1, 2).unwrap();
    let options = RelaxOptions {
        energy_rate_tol: 1e-10,
        ..Default::default()
    };
    let outcome = relax(&system, &truncation, &spaces, &options).unwrap();
    let final_energy = outcome.energy_history.last().unwrap().1;
    // 1.0 for the bosons plus 0.5 + 1.5 for the fermions
    assert!(
        (final_energy - 3.0).abs() < 1e-6,
        "relaxed energy {final_energy}"
    );
    // monotone non-increasing energy along imaginary time
    for pair in outcome.energy_history.windows(2) {
        assert!(
            pair[1].1 <= pair[0].1 + 1e-10,
            "energy rose from {} to {}",
            pair[0].1,
            pair[1].1
        );
    }
}

#[test]
fn noninteracting_product_state_has_unit_leading_population() {
    let grid = build_grid(6.0, 96).unwrap();
    let system = MixtureSystem::harmonic(
        grid,
        &spec(Statistics::Boson, 2, 0.6, 0.0),
        &spec(Statistics::Boson, 1, -0.6, 0.0),
        0.0,
    )
    .unwrap();
    let truncation = Truncation {
        species_states: 2,
        orbitals_a: 2,
        orbitals_b: 2,
    };
    let spaces = EomSpaces::new(&system, 2, 2).unwrap();
    let outcome = relax(&system, &truncation, &spaces, &RelaxOptions::default()).unwrap();
    let eta = mixdyn::tensors::species_densities(&outcome.state.top.view()).unwrap();
    let dec = mixdyn::analysis::natural_species(&eta.eta1_a.view()).unwrap();
    assert!(
        (dec.populations[0] - 1.0).abs() < 1e-6,
        "leading population {}",
        dec.populations[0]
    );
}

#[test]
fn displaced_bosons_oscillate_harmonically() {
    let grid = build_grid(7.0, 112).unwrap();
    let offset = 2.0;
    let relax_system = MixtureSystem::harmonic(
        grid.clone(),
        &spec(Statistics::Boson, 2, offset, 0.0),
        &spec(Statistics::Boson, 1, 0.0, 0.0),
        0.0,
    )
    .unwrap();
    let truncation = Truncation {
        species_states: 1,
        orbitals_a: 1,
        orbitals_b: 1,
    };
    let spaces = EomSpaces::new(&relax_system, 1, 1).unwrap();
    let options = RelaxOptions {
        energy_rate_tol: 1e-11,
        ..Default::default()
    };
    let relaxed = relax(&relax_system, &truncation, &spaces, &options).unwrap();

    // quench: trap centers move to the origin
    let run_system = MixtureSystem::harmonic(
        grid.clone(),
        &spec(Statistics::Boson, 2, 0.0, 0.0),
        &spec(Statistics::Boson, 1, 0.0, 0.0),
        0.0,
    )
    .unwrap();
    let config = PropagationConfig {
        t_final: 20.0,
        output_stride: 0.25,
        ..Default::default()
    };
    let outcome = propagate(&relaxed.state, &run_system, &spaces, &config).unwrap();
    assert_eq!(outcome.status, PropagationStatus::Completed);
    let mut worst = 0.0f64;
    for snap in &outcome.trajectory.snapshots {
        let com = center_of_mass(&snap.density_a.view(), &grid);
        let expect = offset * snap.time.cos();
        worst = worst.max((com - expect).abs());
    }
    assert!(worst < 1e-6, "center-of-mass deviation {worst:.3e}");
}

#[test]
fn interacting_run_conserves_energy_and_norm() {
    let grid = build_grid(6.0, 96).unwrap();
    let relax_system = MixtureSystem::harmonic(
        grid.clone(),
        &spec(Statistics::Boson, 1, 0.8, 0.0),
        &spec(Statistics::Fermion, 1, -0.8, 0.0),
        0.7,
    )
    .unwrap();
    let truncation = Truncation {
        species_states: 2,
        orbitals_a: 2,
        orbitals_b: 2,
    };
    let spaces = EomSpaces::new(&relax_system, 2, 2).unwrap();
    let relaxed = relax(&relax_system, &truncation, &spaces, &RelaxOptions::default()).unwrap();

    let run_system = MixtureSystem::harmonic(
        grid.clone(),
        &spec(Statistics::Boson, 1, 0.0, 0.0),
        &spec(Statistics::Fermion, 1, 0.0, 0.0),
        0.7,
    )
    .unwrap();
    let config = PropagationConfig {
        t_final: 5.0,
        output_stride: 0.1,
        ..Default::default()
    };
    let outcome = propagate(&relaxed.state, &run_system, &spaces, &config).unwrap();
    assert_eq!(outcome.status, PropagationStatus::Completed);
    let traj = &outcome.trajectory;
    assert!(traj.max_norm_drift() < 1e-10, "norm drift {:.3e}", traj.max_norm_drift());
    assert!(
        traj.max_energy_drift() < 1e-7,
        "energy drift {:.3e}",
        traj.max_energy_drift()
    );
    // density matrices stay positive along the run
    for snap in &traj.snapshots {
        assert!(snap.min_eta_eigenvalue > -1e-10);
        assert!(snap.min_rho_eigenvalue > -1e-10);
        // Schmidt symmetry of the natural species populations
        for (la, lb) in snap.nat_species_a.iter().zip(snap.nat_species_b.iter()) {
            assert!((la - lb).abs() < 1e-10);
        }
    }
}

#[test]
fn imaginary_time_config_requires_future_final_time() {
    let grid = build_grid(6.0, 96).unwrap();
    let system = MixtureSystem::harmonic(
        grid,
        &spec(Statistics::Boson, 1, 0.0, 0.0),
        &spec(Statistics::Boson, 1, 0.0, 0.0),
        0.0,
    )
    .unwrap();
    let truncation = Truncation {
        species_states: 1,
        orbitals_a: 1,
        orbitals_b: 1,
    };
    let spaces = EomSpaces::new(&system, 1, 1).unwrap();
    let state = mixdyn::eom::seed_state(&system, &truncation, &spaces, 0.0, 1).unwrap();
    let config = PropagationConfig {
        mode: PropagationMode::ImaginaryTime,
        t_final: -1.0,
        ..Default::default()
    };
    assert!(propagate(&state, &system, &spaces, &config).is_err());
}
