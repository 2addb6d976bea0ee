//! Full configuration interaction over a fixed basis of harmonic-trap
//! eigenfunctions: dense Hamiltonian, exact diagonalization for the ground
//! state and spectral propagation. All operators are assembled from the
//! first-principles ladder matrices, independently of the variational
//! engine's factorized transition-matrix machinery.

use ndarray::{Array1, Array2};
use ndarray_linalg::SVD;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{enumerate_basis, FockBasis, Statistics};
use crate::grid::{harmonic_potential, kinetic_operator, Grid};
use crate::linalg::symmetric_eig;
use crate::oracle::ladder::annihilation;

#[derive(Debug, Clone)]
pub struct FullCiSpecies {
    pub statistics: Statistics,
    pub particles: u32,
    pub g: f64,
    pub relax_offset: f64,
}

#[derive(Debug)]
pub struct FullCiRun {
    pub times: Vec<f64>,
    /// Natural species populations (descending) per output time; a single
    /// unit entry when species B is absent.
    pub lambda: Vec<Vec<f64>>,
    /// Natural orbital populations per species (descending, unit sum).
    pub nat_occ_a: Vec<Vec<f64>>,
    pub nat_occ_b: Vec<Vec<f64>>,
    pub density_a: Vec<Array1<f64>>,
    pub density_b: Vec<Array1<f64>>,
    pub relax_energy: f64,
    pub energy: f64,
}

struct SpeciesOperators {
    basis: FockBasis,
    /// a+_r a_s within the N-particle sector, m^2 dense matrices.
    hops: Vec<Array2<f64>>,
    /// a+_r a+_s a_v a_u indexed by ((r s), (u v)); empty when N < 2.
    pair_hops: Vec<Array2<f64>>,
}

fn species_operators(statistics: Statistics, particles: u32, m: usize) -> Result<SpeciesOperators> {
    let basis = enumerate_basis(statistics, particles, m)?;
    let lower1 = enumerate_basis(statistics, particles - 1, m)?;
    let ann: Vec<Array2<f64>> = (0..m)
        .map(|q| annihilation(&basis, &lower1, q))
        .collect::<Result<_>>()?;
    let mut hops = Vec::with_capacity(m * m);
    for r in 0..m {
        for s in 0..m {
            hops.push(ann[r].t().dot(&ann[s]));
        }
    }
    let mut pair_hops = Vec::new();
    if particles >= 2 {
        let lower2 = enumerate_basis(statistics, particles - 2, m)?;
        let ann2: Vec<Array2<f64>> = (0..m)
            .map(|q| annihilation(&lower1, &lower2, q))
            .collect::<Result<_>>()?;
        for r in 0..m {
            for s in 0..m {
                let raise = ann[r].t().dot(&ann2[s].t());
                for u in 0..m {
                    for v in 0..m {
                        let lower = ann2[v].dot(&ann[u]);
                        pair_hops.push(raise.dot(&lower));
                    }
                }
            }
        }
    }
    Ok(SpeciesOperators {
        basis,
        hops,
        pair_hops,
    })
}

/// One-species Hamiltonian in its Fock sector from one-body integrals and a
/// contact coupling.
fn species_hamiltonian(
    ops: &SpeciesOperators,
    h_mat: &Array2<f64>,
    v_mat: Option<&Array2<f64>>,
    m: usize,
) -> Array2<f64> {
    let k = ops.basis.len();
    let mut h = Array2::<f64>::zeros((k, k));
    for r in 0..m {
        for s in 0..m {
            let w = h_mat[[r, s]];
            if w != 0.0 {
                h.scaled_add(w, &ops.hops[r * m + s]);
            }
        }
    }
    if let Some(v) = v_mat {
        if !ops.pair_hops.is_empty() {
            for r in 0..m {
                for s in 0..m {
                    for u in 0..m {
                        for vv in 0..m {
                            let w = 0.5 * v[[r * m + s, u * m + vv]];
                            if w != 0.0 {
                                let idx = ((r * m + s) * m + u) * m + vv;
                                h.scaled_add(w, &ops.pair_hops[idx]);
                            }
                        }
                    }
                }
            }
        }
    }
    h
}

fn orbital_integrals(
    grid: &Grid,
    chi: &Array2<f64>,
    offset: f64,
) -> Result<Array2<f64>> {
    let m = chi.nrows();
    let t = kinetic_operator(grid, 1.0)?;
    let u = harmonic_potential(grid, offset, 1.0)?;
    let h_op = t.add(&u)?;
    let dense = h_op.to_dense();
    let applied = chi.dot(&dense.t());
    Ok(chi.dot(&applied.t()).mapv(|x| x * grid.spacing()))
}

fn contact_integrals(grid: &Grid, chi: &Array2<f64>, g: f64) -> Array2<f64> {
    let m = chi.nrows();
    let npts = grid.len();
    let mut v = Array2::<f64>::zeros((m * m, m * m));
    for r in 0..m {
        for s in 0..m {
            for u in 0..m {
                for vv in 0..m {
                    let mut acc = 0.0;
                    for x in 0..npts {
                        acc += chi[[r, x]] * chi[[s, x]] * chi[[u, x]] * chi[[vv, x]];
                    }
                    v[[r * m + s, u * m + vv]] = g * grid.spacing() * acc;
                }
            }
        }
    }
    v
}

/// Full-CI reference: relax in offset traps, quench to centered traps,
/// propagate spectrally and record correlation observables.
pub fn fullci_small(
    grid: &Grid,
    n_ho: usize,
    species_a: &FullCiSpecies,
    species_b: Option<&FullCiSpecies>,
    g_ab: f64,
    t_final: f64,
    stride: f64,
) -> Result<FullCiRun> {
    if n_ho == 0 || n_ho > grid.len() {
        return Err(Error::InvalidBasis(format!(
            "harmonic basis size {n_ho} out of range"
        )));
    }
    // centered-trap eigenfunctions as the fixed single-particle basis
    let t = kinetic_operator(grid, 1.0)?;
    let u = harmonic_potential(grid, 0.0, 1.0)?;
    let h_grid = t.add(&u)?.to_dense();
    let (_, vecs) = symmetric_eig(&h_grid.view())?;
    let scale = 1.0 / grid.spacing().sqrt();
    let chi = Array2::from_shape_fn((n_ho, grid.len()), |(r, x)| vecs[[x, r]] * scale);

    // enforce the dense-dimension cap before any operator assembly
    let k_a = enumerate_basis(species_a.statistics, species_a.particles, n_ho)?.len();
    let k_b = match species_b {
        Some(sb) => enumerate_basis(sb.statistics, sb.particles, n_ho)?.len(),
        None => 1,
    };
    if k_a * k_b > 20_000 {
        return Err(Error::InvalidBasis(format!(
            "dense dimension {} exceeds the 2e4 cap",
            k_a * k_b
        )));
    }
    let ops_a = species_operators(species_a.statistics, species_a.particles, n_ho)?;
    let ops_b = match species_b {
        Some(sb) => Some(species_operators(sb.statistics, sb.particles, n_ho)?),
        None => None,
    };

    let v_a = (species_a.g != 0.0).then(|| contact_integrals(grid, &chi, species_a.g));
    let h_relax_a = orbital_integrals(grid, &chi, species_a.relax_offset)?;
    let h_quench_a = orbital_integrals(grid, &chi, 0.0)?;
    let ha_relax = species_hamiltonian(&ops_a, &h_relax_a, v_a.as_ref(), n_ho);
    let ha_quench = species_hamiltonian(&ops_a, &h_quench_a, v_a.as_ref(), n_ho);

    let dim = k_a * k_b;
    let mut h_relax = Array2::<f64>::zeros((dim, dim));
    let mut h_quench = Array2::<f64>::zeros((dim, dim));
    kron_accumulate(&mut h_relax, &ha_relax, None, k_a, k_b);
    kron_accumulate(&mut h_quench, &ha_quench, None, k_a, k_b);

    if let (Some(sb), Some(ops_b)) = (species_b, ops_b.as_ref()) {
        let v_b = (sb.g != 0.0).then(|| contact_integrals(grid, &chi, sb.g));
        let hb_relax_mat = orbital_integrals(grid, &chi, sb.relax_offset)?;
        let hb_quench_mat = orbital_integrals(grid, &chi, 0.0)?;
        let hb_relax = species_hamiltonian(ops_b, &hb_relax_mat, v_b.as_ref(), n_ho);
        let hb_quench = species_hamiltonian(ops_b, &hb_quench_mat, v_b.as_ref(), n_ho);
        kron_accumulate(&mut h_relax, &hb_relax, Some(()), k_a, k_b);
        kron_accumulate(&mut h_quench, &hb_quench, Some(()), k_a, k_b);

        if g_ab != 0.0 {
            let w = contact_integrals(grid, &chi, g_ab);
            // sum_(r s) hopA_(r s) (x) [sum_(u v) w^{ru}_{sv} hopB_(u v)]
            for r in 0..n_ho {
                for s in 0..n_ho {
                    let hop_a = &ops_a.hops[r * n_ho + s];
                    let mut wb = Array2::<f64>::zeros((k_b, k_b));
                    for uu in 0..n_ho {
                        for vv in 0..n_ho {
                            // w^{ru}_{sv} = <chi_r chi_u| w |chi_s chi_v>
                            let coupling = w[[r * n_ho + uu, s * n_ho + vv]];
                            if coupling != 0.0 {
                                wb.scaled_add(coupling, &ops_b.hops[uu * n_ho + vv]);
                            }
                        }
                    }
                    for (na, npa) in iproduct_nonzero(hop_a) {
                        let amp = hop_a[[na, npa]];
                        for nb in 0..k_b {
                            for npb in 0..k_b {
                                let w2 = wb[[nb, npb]];
                                if w2 != 0.0 {
                                    h_relax[[na * k_b + nb, npa * k_b + npb]] += amp * w2;
                                    h_quench[[na * k_b + nb, npa * k_b + npb]] += amp * w2;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let (relax_vals, relax_vecs) = symmetric_eig(&h_relax.view())?;
    drop(h_relax);
    let psi0: Array1<f64> = relax_vecs.column(0).to_owned();
    let relax_energy = relax_vals[0];
    drop(relax_vecs);
    let energy = psi0.dot(&h_quench.dot(&psi0));
    let (vals, vecs) = symmetric_eig(&h_quench.view())?;
    drop(h_quench);
    let coeffs: Array1<f64> = vecs.t().dot(&psi0);

    let n_out = (t_final / stride).round() as usize;
    let mut run = FullCiRun {
        times: Vec::new(),
        lambda: Vec::new(),
        nat_occ_a: Vec::new(),
        nat_occ_b: Vec::new(),
        density_a: Vec::new(),
        density_b: Vec::new(),
        relax_energy,
        energy,
    };

    for k in 0..=n_out {
        let t = stride * k as f64;
        let phased = Array1::from_shape_fn(dim, |n| C64::from_polar(coeffs[n], -vals[n] * t));
        let psi_t: Array1<C64> = vecs.mapv(|v| C64::new(v, 0.0)).dot(&phased);

        // natural species populations from the reshaped coefficient matrix
        let lambda = if k_b > 1 {
            let mat = Array2::from_shape_fn((k_a, k_b), |(i, j)| psi_t[i * k_b + j]);
            let (_, s, _) = mat
                .svd(false, false)
                .map_err(|e| Error::Backend(format!("svd failed: {e}")))?;
            s.iter().map(|x| x * x).collect()
        } else {
            vec![1.0]
        };

        let (occ_a, rho_a) = one_body_observables(&psi_t, &ops_a.hops, n_ho, k_a, k_b, true, &chi, grid);
        let (occ_b, rho_b) = match ops_b.as_ref() {
            Some(ops) => one_body_observables(&psi_t, &ops.hops, n_ho, k_a, k_b, false, &chi, grid),
            None => (vec![], Array1::zeros(grid.len())),
        };

        run.times.push(t);
        run.lambda.push(lambda);
        run.nat_occ_a.push(occ_a);
        run.nat_occ_b.push(occ_b);
        run.density_a.push(rho_a);
        run.density_b.push(rho_b);
    }
    Ok(run)
}

fn kron_accumulate(
    target: &mut Array2<f64>,
    op: &Array2<f64>,
    right_side: Option<()>,
    k_a: usize,
    k_b: usize,
) {
    match right_side {
        None => {
            // op (x) I_B
            for na in 0..k_a {
                for npa in 0..k_a {
                    let v = op[[na, npa]];
                    if v != 0.0 {
                        for nb in 0..k_b {
                            target[[na * k_b + nb, npa * k_b + nb]] += v;
                        }
                    }
                }
            }
        }
        Some(()) => {
            // I_A (x) op
            for nb in 0..k_b {
                for npb in 0..k_b {
                    let v = op[[nb, npb]];
                    if v != 0.0 {
                        for na in 0..k_a {
                            target[[na * k_b + nb, na * k_b + npb]] += v;
                        }
                    }
                }
            }
        }
    }
}

fn iproduct_nonzero(m: &Array2<f64>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[[i, j]] != 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn one_body_observables(
    psi: &Array1<C64>,
    hops: &[Array2<f64>],
    m: usize,
    k_a: usize,
    k_b: usize,
    species_a: bool,
    chi: &Array2<f64>,
    grid: &Grid,
) -> (Vec<f64>, Array1<f64>) {
    let mut rho1 = Array2::<C64>::zeros((m, m));
    for r in 0..m {
        for s in 0..m {
            let hop = &hops[r * m + s];
            let mut acc = C64::new(0.0, 0.0);
            if species_a {
                for (na, npa) in iproduct_nonzero(hop) {
                    let amp = hop[[na, npa]];
                    for nb in 0..k_b {
                        acc += psi[na * k_b + nb].conj() * psi[npa * k_b + nb] * amp;
                    }
                }
            } else {
                for (nb, npb) in iproduct_nonzero(hop) {
                    let amp = hop[[nb, npb]];
                    for na in 0..k_a {
                        acc += psi[na * k_b + nb].conj() * psi[na * k_b + npb] * amp;
                    }
                }
            }
            rho1[[r, s]] = acc;
        }
    }
    let trace: f64 = (0..m).map(|r| rho1[[r, r]].re).sum();
    let (vals, _) = crate::linalg::hermitian_eig(&rho1.view()).expect("rho1 eig");
    let mut occ: Vec<f64> = vals.iter().rev().map(|v| v / trace).collect();
    occ.truncate(m);
    let mut density = Array1::<f64>::zeros(grid.len());
    for r in 0..m {
        for s in 0..m {
            let w = rho1[[r, s]];
            if w.norm_sqr() == 0.0 {
                continue;
            }
            for x in 0..grid.len() {
                density[x] += (w * chi[[r, x]] * chi[[s, x]]).re;
            }
        }
    }
    (occ, density)
}
