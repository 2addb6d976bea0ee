//! Observables and correlation diagnostics: one-body densities, natural
//! species functions (NSFs) and natural orbitals (NOs), Schmidt-resolved
//! density layers and the integrated convergence metrics.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::SVD;
use num_complex::Complex64 as C64;

use crate::eom::{evaluate, EomSpaces, MixtureState, RegularizationPolicy};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{hermitian_eig, hermiticity_defect};
use crate::system::MixtureSystem;

/// Spectral decomposition of a reduced density operator: populations in
/// descending order with the corresponding orthonormal modes as rows.
///
/// For natural species functions the modes are coefficient vectors over the
/// SBSs, for natural orbitals they are grid functions.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub populations: Vec<f64>,
    pub modes: Array2<C64>,
}

impl SpectralDecomposition {
    /// Reorder modes to maximize overlap with a previous decomposition
    /// (greedy assignment), keeping population/mode pairs together. The
    /// inner product carries the quadrature weight of the mode space.
    pub fn reorder_for_continuity(&mut self, previous: &ArrayView2<C64>, weight: f64) {
        let n = self.populations.len();
        if previous.nrows() != n || previous.ncols() != self.modes.ncols() {
            return;
        }
        let mut assigned = vec![false; n];
        let mut order = vec![0usize; n];
        for prev_idx in 0..n {
            let mut best = None;
            let mut best_overlap = -1.0;
            for cur in 0..n {
                if assigned[cur] {
                    continue;
                }
                let mut overlap = C64::new(0.0, 0.0);
                for x in 0..self.modes.ncols() {
                    overlap += previous[[prev_idx, x]].conj() * self.modes[[cur, x]];
                }
                let mag = (overlap * weight).norm();
                if mag > best_overlap {
                    best_overlap = mag;
                    best = Some(cur);
                }
            }
            let pick = best.expect("assignment must exist");
            assigned[pick] = true;
            order[prev_idx] = pick;
        }
        let populations: Vec<f64> = order.iter().map(|&i| self.populations[i]).collect();
        let mut modes = Array2::<C64>::zeros(self.modes.raw_dim());
        for (slot, &src) in order.iter().enumerate() {
            modes.row_mut(slot).assign(&self.modes.row(src));
        }
        self.populations = populations;
        self.modes = modes;
    }
}

/// Spectral decomposition of a unit-trace hermitian PSD matrix, descending.
/// The mode rows are the state coefficient vectors (conjugated eigenvectors
/// of the index-convention matrix).
pub fn natural_species(eta1: &ArrayView2<C64>) -> Result<SpectralDecomposition> {
    let m = eta1.nrows();
    let scale = eta1.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1e-300);
    let defect = hermiticity_defect(eta1);
    if defect > 1e-8 * scale.max(1.0) {
        return Err(Error::NotHermitian {
            defect,
            tol: 1e-8,
        });
    }
    let trace: C64 = (0..m).map(|i| eta1[[i, i]]).sum();
    if (trace.re - 1.0).abs() > 1e-6 || trace.im.abs() > 1e-10 {
        return Err(Error::NotNormalized(format!(
            "species density trace {} deviates from unity",
            trace.re
        )));
    }
    let (vals, vecs) = hermitian_eig(eta1)?;
    // descending populations; coefficient vectors are conjugated eigenvectors
    let mut populations = Vec::with_capacity(m);
    let mut modes = Array2::<C64>::zeros((m, m));
    for k in 0..m {
        // descending order; tiny negative eigenvalues stay visible to callers
        let src = m - 1 - k;
        populations.push(vals[src]);
        for i in 0..m {
            modes[[k, i]] = vecs[[i, src]].conj();
        }
    }
    Ok(SpectralDecomposition { populations, modes })
}

/// Natural orbitals of a particle-layer density matrix with trace N: the
/// populations are normalized to unit sum and the modes are returned as grid
/// functions assembled from the orbital set.
pub fn natural_orbitals(
    rho1: &ArrayView2<C64>,
    orbitals: &ArrayView2<C64>,
) -> Result<SpectralDecomposition> {
    let m = rho1.nrows();
    if orbitals.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "density matrix rank {m} vs {} orbitals",
            orbitals.nrows()
        )));
    }
    let scale = rho1.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    let defect = hermiticity_defect(rho1);
    if defect > 1e-8 * scale {
        return Err(Error::NotHermitian {
            defect,
            tol: 1e-8 * scale,
        });
    }
    let trace: C64 = (0..m).map(|i| rho1[[i, i]]).sum();
    if trace.re <= 0.0 {
        return Err(Error::NotNormalized(
            "particle density trace must be positive".into(),
        ));
    }
    let (vals, vecs) = hermitian_eig(rho1)?;
    let g = orbitals.ncols();
    let mut populations = Vec::with_capacity(m);
    let mut modes = Array2::<C64>::zeros((m, g));
    for k in 0..m {
        let src = m - 1 - k;
        populations.push(vals[src] / trace.re);
        for x in 0..g {
            let mut acc = C64::new(0.0, 0.0);
            for q in 0..m {
                acc += vecs[[q, src]].conj() * orbitals[[q, x]];
            }
            modes[[k, x]] = acc;
        }
    }
    Ok(SpectralDecomposition { populations, modes })
}

/// One-body density on the grid from a particle-layer density matrix,
/// rho(x) = sum_{kq} rho1[[k, q]] conj(phi_k(x)) phi_q(x).
pub fn one_body_density(rho1: &ArrayView2<C64>, orbitals: &ArrayView2<C64>) -> Array1<f64> {
    let m = rho1.nrows();
    let g = orbitals.ncols();
    let mut out = Array1::<f64>::zeros(g);
    for k in 0..m {
        for q in 0..m {
            let w = rho1[[k, q]];
            if w.norm_sqr() == 0.0 {
                continue;
            }
            for x in 0..g {
                out[x] += (w * orbitals[[k, x]].conj() * orbitals[[q, x]]).re;
            }
        }
    }
    out
}

/// Center of mass of a one-body density.
pub fn center_of_mass(density: &ArrayView1<f64>, grid: &Grid) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, rho) in grid.points().iter().zip(density.iter()) {
        num += x * rho;
        den += rho;
    }
    num / den
}

/// Time record of the one-body densities, optionally resolved into
/// Schmidt-mode layers lambda_k rho_k(x) that resum to the full density.
#[derive(Debug, Clone)]
pub struct DensityRecord {
    pub time: f64,
    pub density_a: Array1<f64>,
    pub density_b: Array1<f64>,
    pub layers_a: Option<Vec<Array1<f64>>>,
    pub layers_b: Option<Vec<Array1<f64>>>,
}

/// Schmidt decomposition of the top layer: populations (squared singular
/// values, descending) and the paired mode coefficient vectors of both
/// species in SBS coordinates.
pub fn schmidt_modes(top: &ArrayView2<C64>) -> Result<(Vec<f64>, Array2<C64>, Array2<C64>)> {
    let (u, s, vt) = top
        .to_owned()
        .svd(true, true)
        .map_err(|e| Error::Backend(format!("svd failed: {e}")))?;
    let u = u.expect("left singular vectors requested");
    let vt = vt.expect("right singular vectors requested");
    let m = top.nrows();
    let populations: Vec<f64> = s.iter().map(|x| x * x).collect();
    // A-mode k coefficients: U[:, k]; B-mode k coefficients: row k of V^H
    let mut modes_a = Array2::<C64>::zeros((m, m));
    let mut modes_b = Array2::<C64>::zeros((m, m));
    for k in 0..m {
        for i in 0..m {
            modes_a[[k, i]] = u[[i, k]];
            modes_b[[k, i]] = vt[[k, i]];
        }
    }
    Ok((populations, modes_a, modes_b))
}

/// NSF-resolved density layers of a mixture state. The k-th layer equals
/// lambda_k rho_k(x) so the layers resum to the full density exactly.
pub fn schmidt_layers(
    state: &MixtureState,
    spaces: &EomSpaces,
) -> Result<DensityRecord> {
    let norm = state.norm();
    if !(0.99..=1.01).contains(&norm) {
        return Err(Error::NotNormalized(format!(
            "state norm {norm:.6} too far from unity for analysis"
        )));
    }
    let top = state.top.mapv(|z| z / norm);
    let (populations, modes_a, modes_b) = schmidt_modes(&top.view())?;
    let d1a = spaces.a.one_body_tensor(&state.coeff_a.view());
    let d1b = spaces.b.one_body_tensor(&state.coeff_b.view());

    let layer =
        |weights: &Array2<C64>, k: usize, d1: &ndarray::Array4<C64>, orbs: &Array2<C64>| {
            let m_states = weights.ncols();
            let m = d1.dim().2;
            let mut rho = Array2::<C64>::zeros((m, m));
            for i in 0..m_states {
                for j in 0..m_states {
                    let w = weights[[k, i]].conj() * weights[[k, j]];
                    if w.norm_sqr() == 0.0 {
                        continue;
                    }
                    for r in 0..m {
                        for s in 0..m {
                            rho[[r, s]] += w * d1[[i, j, r, s]];
                        }
                    }
                }
            }
            one_body_density(&rho.view(), &orbs.view())
        };

    let m_states = state.species_states();
    let mut layers_a = Vec::with_capacity(m_states);
    let mut layers_b = Vec::with_capacity(m_states);
    for k in 0..m_states {
        let la = layer(&modes_a, k, &d1a, &state.orbitals_a);
        let lb = layer(&modes_b, k, &d1b, &state.orbitals_b);
        layers_a.push(la.mapv(|v| v * populations[k]));
        layers_b.push(lb.mapv(|v| v * populations[k]));
    }
    let density_a = layers_a
        .iter()
        .fold(Array1::<f64>::zeros(state.orbitals_a.ncols()), |acc, l| acc + l);
    let density_b = layers_b
        .iter()
        .fold(Array1::<f64>::zeros(state.orbitals_b.ncols()), |acc, l| acc + l);
    Ok(DensityRecord {
        time: state.time,
        density_a,
        density_b,
        layers_a: Some(layers_a),
        layers_b: Some(layers_b),
    })
}

/// Spatially integrated density difference between two runs,
/// (1/2N) int dx |rho - rho'|, a pseudometric with values in [0, 1].
pub fn density_difference(
    rho_c: &ArrayView1<f64>,
    rho_cp: &ArrayView1<f64>,
    particles: f64,
    spacing: f64,
) -> Result<f64> {
    if rho_c.len() != rho_cp.len() {
        return Err(Error::DimensionMismatch(format!(
            "density grids differ: {} vs {}",
            rho_c.len(),
            rho_cp.len()
        )));
    }
    let mut acc = 0.0;
    for (a, b) in rho_c.iter().zip(rho_cp.iter()) {
        acc += (a - b).abs();
    }
    Ok(acc * spacing / (2.0 * particles))
}

/// Relative difference of a natural population between two runs,
/// |l_C - l_C'| / l_C'; undefined (None) when the reference vanishes.
pub fn population_difference(lambda_c: f64, lambda_cp: f64) -> Option<f64> {
    if lambda_cp.abs() < 1e-12 {
        None
    } else {
        Some((lambda_c - lambda_cp).abs() / lambda_cp)
    }
}

/// Total energy <Psi| H |Psi> of a state.
pub fn total_energy(
    state: &MixtureState,
    system: &MixtureSystem,
    spaces: &EomSpaces,
) -> Result<f64> {
    let (_, diag) = evaluate(state, system, spaces, &RegularizationPolicy::default())?;
    if diag.energy_imag.abs() > 1e-10 * diag.energy.abs().max(1.0) {
        return Err(Error::Backend(format!(
            "energy has imaginary residue {:.3e}",
            diag.energy_imag
        )));
    }
    Ok(diag.energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_top;
    use ndarray::array;

    #[test]
    fn product_state_has_single_population() {
        let mut a = Array2::<C64>::zeros((3, 3));
        a[[0, 0]] = C64::new(1.0, 0.0);
        let eta = crate::tensors::species_densities(&a.view()).unwrap();
        let dec = natural_species(&eta.eta1_a.view()).unwrap();
        assert!((dec.populations[0] - 1.0).abs() < 1e-12);
        assert!(dec.populations[1].abs() < 1e-12);
    }

    #[test]
    fn balanced_pair_populations() {
        let r = 1.0 / 2f64.sqrt();
        let a = array![
            [C64::new(r, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(r, 0.0)]
        ];
        let eta = crate::tensors::species_densities(&a.view()).unwrap();
        let dec = natural_species(&eta.eta1_a.view()).unwrap();
        assert!((dec.populations[0] - 0.5).abs() < 1e-12);
        assert!((dec.populations[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trace_deviation_rejected() {
        let a = array![
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
        ];
        assert!(natural_species(&a.view()).is_err());
    }

    #[test]
    fn schmidt_population_sum_and_symmetry() {
        for seed in [3u64, 8, 21] {
            let a = random_top(4, seed);
            let (pops, modes_a, modes_b) = schmidt_modes(&a.view()).unwrap();
            let sum: f64 = pops.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
            // spectra from both reduced density matrices coincide
            let eta = crate::tensors::species_densities(&a.view()).unwrap();
            let da = natural_species(&eta.eta1_a.view()).unwrap();
            let db = natural_species(&eta.eta1_b.view()).unwrap();
            for k in 0..4 {
                assert!((da.populations[k] - db.populations[k]).abs() < 1e-10);
                assert!((da.populations[k] - pops[k]).abs() < 1e-10);
            }
            // schmidt reconstruction: A_ij = sum_k s_k a_k[i] b_k[j], the
            // B modes already hold the conjugated right singular vectors
            let mut rebuilt = Array2::<C64>::zeros((4, 4));
            for k in 0..4 {
                let s = pops[k].sqrt();
                for i in 0..4 {
                    for j in 0..4 {
                        rebuilt[[i, j]] += modes_a[[k, i]] * modes_b[[k, j]] * s;
                    }
                }
            }
            let mut max = 0.0f64;
            for (x, y) in rebuilt.iter().zip(a.iter()) {
                max = max.max((x - y).norm());
            }
            assert!(max < 1e-10, "seed {seed}: reconstruction defect {max:.2e}");
        }
    }

    #[test]
    fn density_difference_bounds() {
        let zero = Array1::<f64>::zeros(8);
        let mut left = zero.clone();
        let mut right = zero.clone();
        left[1] = 2.0;
        right[6] = 2.0;
        // disjoint normalized densities (N = 1, dx = 0.5): difference = 1
        let d = density_difference(&left.view(), &right.view(), 1.0, 0.5).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        let same = density_difference(&left.view(), &left.view(), 1.0, 0.5).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn density_difference_is_pseudometric() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let a = Array1::from_shape_fn(16, |_| rng.gen_range(0.0..1.0));
            let b = Array1::from_shape_fn(16, |_| rng.gen_range(0.0..1.0));
            let c = Array1::from_shape_fn(16, |_| rng.gen_range(0.0..1.0));
            let dab = density_difference(&a.view(), &b.view(), 2.0, 0.1).unwrap();
            let dba = density_difference(&b.view(), &a.view(), 2.0, 0.1).unwrap();
            assert!((dab - dba).abs() < 1e-14);
            let dac = density_difference(&a.view(), &c.view(), 2.0, 0.1).unwrap();
            let dcb = density_difference(&c.view(), &b.view(), 2.0, 0.1).unwrap();
            assert!(dab <= dac + dcb + 1e-14);
        }
    }

    #[test]
    fn population_difference_guard() {
        assert_eq!(population_difference(0.5, 0.5), Some(0.0));
        assert_eq!(population_difference(0.5, 0.0), None);
        let d = population_difference(0.48, 0.5).unwrap();
        assert!((d - 0.04).abs() < 1e-12);
    }

    #[test]
    fn continuity_reordering_follows_modes() {
        let mut dec = SpectralDecomposition {
            populations: vec![0.6, 0.4],
            modes: array![
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
                [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
            ],
        };
        // previous step had the identity ordering
        let previous = array![
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
        ];
        dec.reorder_for_continuity(&previous.view(), 1.0);
        assert!((dec.populations[0] - 0.4).abs() < 1e-14);
        assert!((dec.populations[1] - 0.6).abs() < 1e-14);
    }
}
