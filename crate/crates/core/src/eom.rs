//! The coupled equations of motion of the two-layer variational ansatz:
//! a linear Schroedinger equation for the top-layer coefficients, projected
//! equations for the species-basis-state coefficients and for the orbitals,
//! with regularized density-matrix inverses. Both real-time propagation and
//! imaginary-time relaxation run through the same right-hand side.

use ndarray::{s, Array1, Array2, Array4, ArrayView1, ArrayView2};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fock::FockSpace;
use crate::grid::Grid;
use crate::linalg::{dagger, hermitian_eig, hermiticity_defect, loewdin_rows, row_gram_defect};
use crate::ode::{AdaptiveRk, StepStats};
use crate::system::{MixtureSystem, Species};
use crate::tensors::{
    self, interaction_matrix, mean_field_set, one_body_matrix, species_densities, HamiltonianSbs,
    MeanFieldSet,
};
use crate::trajectory::{self, PropagationStats, Trajectory};

/// The full variational state of the binary mixture.
#[derive(Debug, Clone)]
pub struct MixtureState {
    pub time: f64,
    /// Top-layer coefficients A[[i_A, i_B]], M x M.
    pub top: Array2<C64>,
    /// Species coefficient matrices, M rows over the number-state bases.
    pub coeff_a: Array2<C64>,
    pub coeff_b: Array2<C64>,
    /// Orbital sets, one grid function per row.
    pub orbitals_a: Array2<C64>,
    pub orbitals_b: Array2<C64>,
}

impl MixtureState {
    pub fn species_states(&self) -> usize {
        self.top.nrows()
    }

    pub fn orbital_count(&self, which: Species) -> usize {
        match which {
            Species::A => self.orbitals_a.nrows(),
            Species::B => self.orbitals_b.nrows(),
        }
    }

    pub fn coefficients(&self, which: Species) -> &Array2<C64> {
        match which {
            Species::A => &self.coeff_a,
            Species::B => &self.coeff_b,
        }
    }

    pub fn orbitals(&self, which: Species) -> &Array2<C64> {
        match which {
            Species::A => &self.orbitals_a,
            Species::B => &self.orbitals_b,
        }
    }

    pub fn norm(&self) -> f64 {
        self.top.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Worst orthonormality defect over the top-layer norm, both coefficient
    /// sets and both orbital sets.
    pub fn orthonormality_defect(&self, grid: &Grid) -> f64 {
        let mut defect = (self.norm() - 1.0).abs();
        defect = defect.max(row_gram_defect(&self.coeff_a.view(), 1.0));
        defect = defect.max(row_gram_defect(&self.coeff_b.view(), 1.0));
        defect = defect.max(row_gram_defect(&self.orbitals_a.view(), grid.spacing()));
        defect = defect.max(row_gram_defect(&self.orbitals_b.view(), grid.spacing()));
        defect
    }

    pub fn validate(&self, grid: &Grid, tol: f64) -> Result<()> {
        let defect = self.orthonormality_defect(grid);
        if defect > tol {
            return Err(Error::NotNormalized(format!(
                "state orthonormality defect {defect:.3e} exceeds {tol:.1e}"
            )));
        }
        Ok(())
    }

    /// Normalize the top layer and Loewdin-orthonormalize both basis layers.
    pub fn renormalize(&mut self, grid: &Grid) -> Result<()> {
        let n = self.norm();
        if n <= 0.0 {
            return Err(Error::NotNormalized("top-layer norm vanished".into()));
        }
        self.top.mapv_inplace(|z| z / n);
        loewdin_rows(&mut self.coeff_a, 1.0)?;
        loewdin_rows(&mut self.coeff_b, 1.0)?;
        loewdin_rows(&mut self.orbitals_a, grid.spacing())?;
        loewdin_rows(&mut self.orbitals_b, grid.spacing())?;
        Ok(())
    }

    pub fn flattened_len(&self) -> usize {
        self.top.len()
            + self.coeff_a.len()
            + self.coeff_b.len()
            + self.orbitals_a.len()
            + self.orbitals_b.len()
    }

    pub fn flatten(&self) -> Array1<C64> {
        let mut out = Array1::zeros(self.flattened_len());
        let mut offset = 0;
        for block in [
            &self.top,
            &self.coeff_a,
            &self.coeff_b,
            &self.orbitals_a,
            &self.orbitals_b,
        ] {
            for (i, v) in block.iter().enumerate() {
                out[offset + i] = *v;
            }
            offset += block.len();
        }
        out
    }

    pub fn assign_from_flat(&mut self, v: &ArrayView1<C64>) {
        let mut offset = 0;
        for block in [
            &mut self.top,
            &mut self.coeff_a,
            &mut self.coeff_b,
            &mut self.orbitals_a,
            &mut self.orbitals_b,
        ] {
            for (i, slot) in block.iter_mut().enumerate() {
                *slot = v[offset + i];
            }
            offset += block.len();
        }
    }
}

/// Regularization of (near-)singular reduced density matrices: eigenvalues
/// are floored as lambda -> lambda + eps exp(-lambda / eps) before inversion.
#[derive(Debug, Clone, Copy)]
pub struct RegularizationPolicy {
    pub epsilon: f64,
}

impl Default for RegularizationPolicy {
    fn default() -> Self {
        RegularizationPolicy { epsilon: 1e-10 }
    }
}

/// Regularized inverse of a hermitian positive-semidefinite matrix. Returns
/// the inverse together with the smallest unregularized eigenvalue.
pub fn regularized_inverse_detailed(
    rho: &ArrayView2<C64>,
    policy: &RegularizationPolicy,
) -> Result<(Array2<C64>, f64)> {
    if policy.epsilon <= 0.0 {
        return Err(Error::Backend("regularization epsilon must be positive".into()));
    }
    let scale = rho.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    let defect = hermiticity_defect(rho);
    if defect > 1e-8 * scale {
        return Err(Error::NotHermitian {
            defect,
            tol: 1e-8 * scale,
        });
    }
    let (vals, vecs) = hermitian_eig(rho)?;
    let m = rho.nrows();
    let mut inv = Array2::<C64>::zeros((m, m));
    for k in 0..m {
        let lambda = vals[k];
        // clamp the exponent so badly negative eigenvalues (already an
        // invariant violation handled elsewhere) cannot overflow
        let arg = (-lambda / policy.epsilon).min(120.0);
        let reg = lambda + policy.epsilon * arg.exp();
        let w = C64::new(1.0 / reg, 0.0);
        for i in 0..m {
            for j in 0..m {
                inv[[i, j]] += vecs[[i, k]] * w * vecs[[j, k]].conj();
            }
        }
    }
    Ok((inv, vals[0]))
}

/// Regularized inverse (see `regularized_inverse_detailed`).
pub fn regularized_inverse(
    rho: &ArrayView2<C64>,
    policy: &RegularizationPolicy,
) -> Result<Array2<C64>> {
    regularized_inverse_detailed(rho, policy).map(|(inv, _)| inv)
}

/// Fock spaces of both species, built once per run.
#[derive(Debug, Clone)]
pub struct EomSpaces {
    pub a: FockSpace,
    pub b: FockSpace,
}

impl EomSpaces {
    pub fn new(system: &MixtureSystem, orbitals_a: usize, orbitals_b: usize) -> Result<Self> {
        Ok(EomSpaces {
            a: FockSpace::new(system.a.statistics, system.a.particles, orbitals_a)?,
            b: FockSpace::new(system.b.statistics, system.b.particles, orbitals_b)?,
        })
    }

    pub fn space(&self, which: Species) -> &FockSpace {
        match which {
            Species::A => &self.a,
            Species::B => &self.b,
        }
    }
}

/// Right-hand sides in Schroedinger form: i dX/dt = value, so real-time
/// evolution uses -i * value and imaginary-time evolution uses -value.
#[derive(Debug, Clone)]
pub struct EomRhs {
    pub top: Array2<C64>,
    pub coeff_a: Array2<C64>,
    pub coeff_b: Array2<C64>,
    pub orbitals_a: Array2<C64>,
    pub orbitals_b: Array2<C64>,
}

/// Scalar diagnostics of one right-hand-side evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EomDiagnostics {
    pub energy: f64,
    pub energy_imag: f64,
    pub min_eta_eigenvalue: f64,
    pub min_rho_eigenvalue: f64,
}

/// Evaluate all coupled equations of motion at the given state.
pub fn evaluate(
    state: &MixtureState,
    system: &MixtureSystem,
    spaces: &EomSpaces,
    reg: &RegularizationPolicy,
) -> Result<(EomRhs, EomDiagnostics)> {
    let grid = &system.grid;
    let m_states = state.species_states();
    let ma = state.orbitals_a.nrows();
    let mb = state.orbitals_b.nrows();
    let g = grid.len();
    let ka = spaces.a.basis().len();
    let kb = spaces.b.basis().len();
    if state.coeff_a.dim() != (m_states, ka) || state.coeff_b.dim() != (m_states, kb) {
        return Err(Error::DimensionMismatch(
            "coefficient matrices do not match the number-state bases".into(),
        ));
    }

    // top layer normalized internally; the equations for the basis layers are
    // invariant under the overall amplitude, and imaginary-time integration
    // shrinks it between renormalizations
    let raw_norm = state.norm();
    if !(0.01..=100.0).contains(&raw_norm) {
        return Err(Error::NotNormalized(format!(
            "top-layer norm {raw_norm:.3e} out of range"
        )));
    }
    let top_n = state.top.mapv(|z| z / raw_norm);

    // orbital integrals
    let h_a = one_body_matrix(grid, &system.a.one_body, &state.orbitals_a.view());
    let h_b = one_body_matrix(grid, &system.b.one_body, &state.orbitals_b.view());
    let v_a = system
        .a
        .intra
        .as_ref()
        .map(|k| interaction_matrix(grid, k, &state.orbitals_a.view()));
    let v_b = system
        .b
        .intra
        .as_ref()
        .map(|k| interaction_matrix(grid, k, &state.orbitals_b.view()));

    // one-hole representations and transition tensors
    let y_a = spaces.a.lift1_matrix(&state.coeff_a.view());
    let y_b = spaces.b.lift1_matrix(&state.coeff_b.view());
    let d1a = one_body_from_lift(&y_a.view(), m_states, ma);
    let d1b = one_body_from_lift(&y_b.view(), m_states, mb);

    // species-layer density matrices
    let eta = species_densities(&top_n.view())?;
    let (eta_inv_a, min_eta_a) = regularized_inverse_detailed(&eta.eta1_a.view(), reg)?;
    let (eta_inv_b, min_eta_b) = regularized_inverse_detailed(&eta.eta1_b.view(), reg)?;

    // particle-layer density matrices
    let rho1_a = tensors::weighted_one_body(&eta.eta1_a.view(), &d1a);
    let rho1_b = tensors::weighted_one_body(&eta.eta1_b.view(), &d1b);
    let (rho1_inv_a, min_rho_a) = regularized_inverse_detailed(&rho1_a.view(), reg)?;
    let (rho1_inv_b, min_rho_b) = regularized_inverse_detailed(&rho1_b.view(), reg)?;

    let rho2_intra_a = if v_a.is_some() {
        let w = spaces.a.lift2_matrix(&state.coeff_a.view());
        Some(tensors::rho2_intra_from_holes(
            &eta.eta1_a.view(),
            &w.view(),
            m_states,
            ma,
        ))
    } else {
        None
    };
    let rho2_intra_b = if v_b.is_some() {
        let w = spaces.b.lift2_matrix(&state.coeff_b.view());
        Some(tensors::rho2_intra_from_holes(
            &eta.eta1_b.view(),
            &w.view(),
            m_states,
            mb,
        ))
    } else {
        None
    };

    let rho2_inter = system.inter.as_ref().map(|_| {
        let k1a = spaces.a.hole_basis().len();
        let k1b = spaces.b.hole_basis().len();
        if m_states * m_states <= k1a * k1b {
            tensors::rho2_inter_via_d1(&top_n.view(), &d1a, &d1b)
        } else {
            tensors::rho2_inter_via_holes(&top_n.view(), &y_a.view(), &y_b.view(), ma, mb)
        }
    });

    // mean-field operators
    let mf = mean_field_set(
        grid,
        &state.orbitals_a.view(),
        &state.orbitals_b.view(),
        system.a.intra.as_ref(),
        system.b.intra.as_ref(),
        system.inter.as_ref(),
        &d1a,
        &d1b,
    )?;

    // intra-species N-body operators applied to the coefficient rows
    let applied_a = apply_intra(&spaces.a, &h_a, v_a.as_ref(), &state.coeff_a.view());
    let applied_b = apply_intra(&spaces.b, &h_b, v_b.as_ref(), &state.coeff_b.view());

    // Hamiltonian matrix in SBS representation
    let intra_block_a = state.coeff_a.mapv(|z| z.conj()).dot(&applied_a.t());
    let intra_block_b = state.coeff_b.mapv(|z| z.conj()).dot(&applied_b.t());
    let inter_block = system.inter.as_ref().map(|kernel| {
        tensors::inter_species_block(
            grid,
            kernel,
            &state.orbitals_a.view(),
            &state.orbitals_b.view(),
            &d1a,
            &d1b,
        )
    });
    let mut h_tensor = Array4::<C64>::zeros((m_states, m_states, m_states, m_states));
    for ia in 0..m_states {
        for ib in 0..m_states {
            for ja in 0..m_states {
                for jb in 0..m_states {
                    let mut acc = C64::new(0.0, 0.0);
                    if ib == jb {
                        acc += intra_block_a[[ia, ja]];
                    }
                    if ia == ja {
                        acc += intra_block_b[[ib, jb]];
                    }
                    if let Some(w) = &inter_block {
                        acc += w[[ia * m_states + ja, ib * m_states + jb]];
                    }
                    h_tensor[[ia, ib, ja, jb]] = acc;
                }
            }
        }
    }
    let h_sbs = HamiltonianSbs { tensor: h_tensor };
    let energy = h_sbs.expectation(&top_n.view());

    // top layer: i dA/dt = H A (on the unnormalized amplitude)
    let rhs_top = h_sbs.contract(&state.top.view());

    // species layers
    let rhs_coeff_a = species_rhs(
        Species::A,
        state,
        spaces,
        &applied_a,
        &mf,
        &eta_inv_a,
        &top_n.view(),
    );
    let rhs_coeff_b = species_rhs(
        Species::B,
        state,
        spaces,
        &applied_b,
        &mf,
        &eta_inv_b,
        &top_n.view(),
    );

    // orbital layers
    let rhs_orb_a = orbital_rhs(
        grid,
        &system.a.one_body,
        &state.orbitals_a.view(),
        &state.orbitals_b.view(),
        &rho1_inv_a,
        rho2_intra_a.as_ref(),
        mf.particle_v_a.as_ref(),
        rho2_inter.as_ref().map(|r| r.view()),
        mf.particle_w_ab.as_ref(),
        false,
        g,
    );
    let rho2_inter_b = rho2_inter
        .as_ref()
        .map(|r| tensors::flip_inter_layout(&r.view(), ma, mb));
    let rhs_orb_b = orbital_rhs(
        grid,
        &system.b.one_body,
        &state.orbitals_b.view(),
        &state.orbitals_a.view(),
        &rho1_inv_b,
        rho2_intra_b.as_ref(),
        mf.particle_v_b.as_ref(),
        rho2_inter_b.as_ref().map(|r| r.view()),
        mf.particle_w_ba.as_ref(),
        false,
        g,
    );

    let rhs = EomRhs {
        top: rhs_top,
        coeff_a: rhs_coeff_a,
        coeff_b: rhs_coeff_b,
        orbitals_a: rhs_orb_a,
        orbitals_b: rhs_orb_b,
    };
    let diag = EomDiagnostics {
        energy: energy.re,
        energy_imag: energy.im,
        min_eta_eigenvalue: min_eta_a.min(min_eta_b),
        min_rho_eigenvalue: min_rho_a.min(min_rho_b),
    };
    Ok((rhs, diag))
}

/// d1 tensor from a lift1 matrix (gram product).
fn one_body_from_lift(y: &ArrayView2<C64>, rows: usize, m: usize) -> Array4<C64> {
    let gram = dagger(y).dot(y);
    let mut d1 = Array4::<C64>::zeros((rows, rows, m, m));
    for i in 0..rows {
        for j in 0..rows {
            for k in 0..m {
                for q in 0..m {
                    d1[[i, j, k, q]] = gram[[i * m + k, j * m + q]];
                }
            }
        }
    }
    d1
}

/// (H_sigma + V_sigma) applied to every coefficient row.
fn apply_intra(
    space: &FockSpace,
    h: &Array2<C64>,
    v: Option<&Array2<C64>>,
    c: &ArrayView2<C64>,
) -> Array2<C64> {
    let mut out = space.apply_one_body(&h.view(), c);
    if let Some(vmat) = v {
        let vmix = vmat.mapv(|z| z * 0.5);
        out += &space.apply_two_body(&vmix.view(), c);
    }
    out
}

/// Projected species-layer right-hand side (Schroedinger form, no -i).
#[allow(clippy::too_many_arguments)]
fn species_rhs(
    which: Species,
    state: &MixtureState,
    spaces: &EomSpaces,
    applied_intra: &Array2<C64>,
    mf: &MeanFieldSet,
    eta_inv: &Array2<C64>,
    top_n: &ArrayView2<C64>,
) -> Array2<C64> {
    let space = spaces.space(which);
    let c = state.coefficients(which);
    let m_states = state.species_states();
    // untruncated species layer: the projector is the identity
    if m_states == space.basis().len() {
        return Array2::zeros(c.raw_dim());
    }
    let mut raw = applied_intra.clone();

    let species_mf = match which {
        Species::A => &mf.species_ab,
        Species::B => &mf.species_ba,
    };
    let has_mf = species_mf.iter().any(|z| z.norm_sqr() != 0.0);
    if has_mf {
        let m_orb = state.orbital_count(which);
        // bcoef[i][k] = sum_l eta_inv[i][l] conj(eta2 bra weight)
        let mut bcoef = Array2::<C64>::zeros((m_states, m_states));
        for i in 0..m_states {
            for k in 0..m_states {
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..m_states {
                    let bra = match which {
                        Species::A => top_n[[l, k]].conj(),
                        Species::B => top_n[[k, l]].conj(),
                    };
                    acc += eta_inv[[i, l]] * bra;
                }
                bcoef[[i, k]] = acc;
            }
        }
        // effective one-body matrices per (i, j)
        let mut weff = Array4::<C64>::zeros((m_states, m_states, m_orb, m_orb));
        for i in 0..m_states {
            for j in 0..m_states {
                for k in 0..m_states {
                    let bik = bcoef[[i, k]];
                    if bik.norm_sqr() == 0.0 {
                        continue;
                    }
                    for p in 0..m_states {
                        let ket = match which {
                            Species::A => top_n[[j, p]],
                            Species::B => top_n[[p, j]],
                        };
                        let wgt = bik * ket;
                        if wgt.norm_sqr() == 0.0 {
                            continue;
                        }
                        for r in 0..m_orb {
                            for s in 0..m_orb {
                                weff[[i, j, r, s]] += wgt * species_mf[[k, p, r, s]];
                            }
                        }
                    }
                }
            }
        }
        for i in 0..m_states {
            for j in 0..m_states {
                let block = Array2::from_shape_fn((m_orb, m_orb), |(r, s)| weff[[i, j, r, s]]);
                if block.iter().all(|z| z.norm_sqr() == 0.0) {
                    continue;
                }
                let row = c.slice(s![j..j + 1, ..]);
                let applied = space.apply_one_body(&block.view(), &row);
                let mut target = raw.slice_mut(s![i..i + 1, ..]);
                target += &applied;
            }
        }
    }

    project_out_rows(&mut raw, &c.view(), 1.0);
    raw
}

/// Projected orbital-layer right-hand side (Schroedinger form, no -i).
#[allow(clippy::too_many_arguments)]
fn orbital_rhs(
    grid: &Grid,
    one_body: &crate::grid::OneBodyOperator,
    orbitals: &ArrayView2<C64>,
    _partner_orbitals: &ArrayView2<C64>,
    rho1_inv: &Array2<C64>,
    rho2_intra: Option<&Array2<C64>>,
    particle_v: Option<&ndarray::Array3<C64>>,
    rho2_inter: Option<ArrayView2<C64>>,
    particle_w: Option<&ndarray::Array3<C64>>,
    untruncated: bool,
    g: usize,
) -> Array2<C64> {
    let m = orbitals.nrows();
    if untruncated || m == g {
        return Array2::zeros(orbitals.raw_dim());
    }
    let mut raw = one_body.apply(orbitals);

    // mean-field potential matrix MF[p][s](x), then contracted with rho1^-1
    let mut mf_ps: Option<Array2<C64>> = None; // [(p*m + s), x]
    if let (Some(rho2), Some(pot)) = (rho2_intra, particle_v) {
        accumulate_mean_field(&mut mf_ps, rho2, pot, m, g);
    }
    if let (Some(rho2), Some(pot)) = (rho2_inter.as_ref(), particle_w) {
        accumulate_mean_field_view(&mut mf_ps, rho2, pot, m, g);
    }
    if let Some(mf) = mf_ps {
        // ueff[i][s](x) = sum_p rho1_inv[i][p] MF[p][s](x)
        for i in 0..m {
            let mut contribution = Array1::<C64>::zeros(g);
            for p in 0..m {
                let w = rho1_inv[[i, p]];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                for sidx in 0..m {
                    let row = mf.row(p * m + sidx);
                    let phi = orbitals.row(sidx);
                    for x in 0..g {
                        contribution[x] += w * row[x] * phi[x];
                    }
                }
            }
            let mut target = raw.row_mut(i);
            target += &contribution;
        }
    }

    let mut out = raw;
    project_out_rows(&mut out, orbitals, grid.spacing());
    out
}

fn accumulate_mean_field(
    acc: &mut Option<Array2<C64>>,
    rho2: &Array2<C64>,
    pot: &ndarray::Array3<C64>,
    m: usize,
    g: usize,
) {
    accumulate_mean_field_view(acc, &rho2.view(), pot, m, g)
}

/// acc[(p, s)](x) += sum_{q, l} rho2[(p q), (s l)] pot[q][l](x)
fn accumulate_mean_field_view(
    acc: &mut Option<Array2<C64>>,
    rho2: &ArrayView2<C64>,
    pot: &ndarray::Array3<C64>,
    m: usize,
    g: usize,
) {
    let mk = pot.dim().0; // partner orbital count
    // reindex rho2[(p q), (s l)] -> r[(p s), (q l)] and contract by GEMM
    let mut r = Array2::<C64>::zeros((m * m, mk * mk));
    for p in 0..m {
        for q in 0..mk {
            for s in 0..m {
                for l in 0..mk {
                    r[[p * m + s, q * mk + l]] = rho2[[p * mk + q, s * mk + l]];
                }
            }
        }
    }
    let pot_flat = pot
        .to_shape((mk * mk, g))
        .expect("potential reshape")
        .to_owned();
    let mf = r.dot(&pot_flat);
    match acc {
        Some(existing) => *existing += &mf,
        None => *acc = Some(mf),
    }
}

/// Remove the component of every row of `raw` along the span of the rows of
/// `basis` (inner product with quadrature weight `weight`).
fn project_out_rows(raw: &mut Array2<C64>, basis: &ArrayView2<C64>, weight: f64) {
    // overlaps[r][i] = weight * <basis_r | raw_i>
    let conj_basis = basis.mapv(|z| z.conj());
    let overlaps = conj_basis.dot(&raw.t()).mapv(|z| z * weight);
    let correction = overlaps.t().dot(basis);
    *raw -= &correction;
}

/// Top-layer equation of motion: dA/dt = -i H A.
pub fn rhs_top(top: &ArrayView2<C64>, h_sbs: &HamiltonianSbs) -> Array2<C64> {
    h_sbs.contract(top).mapv(|z| z * C64::new(0.0, -1.0))
}

/// Species-layer equation of motion dC/dt for one species (real time).
pub fn rhs_species(
    which: Species,
    state: &MixtureState,
    system: &MixtureSystem,
    spaces: &EomSpaces,
    reg: &RegularizationPolicy,
) -> Result<Array2<C64>> {
    let (rhs, _) = evaluate(state, system, spaces, reg)?;
    let f = match which {
        Species::A => rhs.coeff_a,
        Species::B => rhs.coeff_b,
    };
    Ok(f.mapv(|z| z * C64::new(0.0, -1.0)))
}

/// Orbital equation of motion dPhi/dt for one species (real time).
pub fn rhs_orbitals(
    which: Species,
    state: &MixtureState,
    system: &MixtureSystem,
    spaces: &EomSpaces,
    reg: &RegularizationPolicy,
) -> Result<Array2<C64>> {
    let (rhs, _) = evaluate(state, system, spaces, reg)?;
    let f = match which {
        Species::A => rhs.orbitals_a,
        Species::B => rhs.orbitals_b,
    };
    Ok(f.mapv(|z| z * C64::new(0.0, -1.0)))
}

/// Hamiltonian matrix in SBS representation at a state, assembled through
/// the transition-tensor route.
pub fn hamiltonian_sbs(
    state: &MixtureState,
    system: &MixtureSystem,
    spaces: &EomSpaces,
) -> Result<HamiltonianSbs> {
    let t_a = crate::fock::TransitionTensors {
        one_body: spaces.a.one_body_tensor(&state.coeff_a.view()),
        two_body: spaces.a.two_body_tensor(&state.coeff_a.view()),
    };
    let t_b = crate::fock::TransitionTensors {
        one_body: spaces.b.one_body_tensor(&state.coeff_b.view()),
        two_body: spaces.b.two_body_tensor(&state.coeff_b.view()),
    };
    tensors::hamiltonian_matrix(
        &system.grid,
        &state.orbitals_a.view(),
        &state.orbitals_b.view(),
        &system.a.one_body,
        &system.b.one_body,
        system.a.intra.as_ref(),
        system.b.intra.as_ref(),
        system.inter.as_ref(),
        &t_a,
        &t_b,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMode {
    RealTime,
    ImaginaryTime,
}

#[derive(Debug, Clone)]
pub struct PropagationConfig {
    pub mode: PropagationMode,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Time between recorded snapshots.
    pub output_stride: f64,
    pub t_final: f64,
    /// Record a checkpoint state every this many snapshots (0 disables).
    pub checkpoint_every: usize,
    pub record_schmidt_layers: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            mode: PropagationMode::RealTime,
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            initial_step: 1e-3,
            max_step: 0.05,
            output_stride: 0.05,
            t_final: 1.0,
            checkpoint_every: 0,
            record_schmidt_layers: false,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self, start_time: f64) -> Result<()> {
        if self.abs_tol <= 0.0 || self.rel_tol <= 0.0 {
            return Err(Error::PropagationAborted {
                time: start_time,
                reason: "tolerances must be positive".into(),
            });
        }
        if self.t_final <= start_time {
            return Err(Error::PropagationAborted {
                time: start_time,
                reason: format!(
                    "final time {} not beyond start time {}",
                    self.t_final, start_time
                ),
            });
        }
        if self.output_stride <= 0.0 {
            return Err(Error::PropagationAborted {
                time: start_time,
                reason: "output stride must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropagationStatus {
    Completed,
    StepUnderflow { time: f64 },
    InvariantViolation { time: f64, what: String },
}

#[derive(Debug)]
pub struct PropagationOutcome {
    pub trajectory: Trajectory,
    pub final_state: MixtureState,
    pub status: PropagationStatus,
}

/// Propagate the state through the coupled equations of motion, recording
/// snapshots every `output_stride`. In imaginary-time mode the state is
/// renormalized and re-orthonormalized after every accepted step.
pub fn propagate(
    initial: &MixtureState,
    system: &MixtureSystem,
    spaces: &EomSpaces,
    config: &PropagationConfig,
) -> Result<PropagationOutcome> {
    config.validate(initial.time)?;
    initial.validate(&system.grid, 1e-6)?;
    let reg = RegularizationPolicy::default();
    let rk = AdaptiveRk {
        abs_tol: config.abs_tol,
        rel_tol: config.rel_tol,
        initial_step: config.initial_step,
        max_step: config.max_step,
        min_step: 1e-13,
    };
    let imaginary = config.mode == PropagationMode::ImaginaryTime;

    let mut state = initial.clone();
    let mut flat = state.flatten();
    let scratch = std::cell::RefCell::new(state.clone());
    let mut stats = StepStats::default();
    let last_diag = std::cell::RefCell::new(None::<EomDiagnostics>);
    let mut trajectory = Trajectory::new();
    let mut violation: Option<(f64, String)> = None;

    // initial snapshot
    let snap0 = trajectory::snapshot(&state, system, spaces, config.record_schmidt_layers, None)?;
    let e0 = snap0.energy;
    trajectory.push(snap0, if config.checkpoint_every > 0 { Some(state.clone()) } else { None });

    let n_out = ((config.t_final - initial.time) / config.output_stride).round() as usize;
    let n_out = n_out.max(1);
    let mut status = PropagationStatus::Completed;

    'outer: for k in 1..=n_out {
        let t_target = initial.time + config.output_stride * k as f64;
        let t_target = t_target.min(config.t_final);
        let segment = {
            let viol = &mut violation;
            rk.integrate(
                &mut flat,
                state.time,
                t_target,
                |_t, y, dy| {
                    let mut work = scratch.borrow_mut();
                    work.assign_from_flat(y);
                    let (rhs, diag) = evaluate(&work, system, spaces, &reg)?;
                    *last_diag.borrow_mut() = Some(diag);
                    let factor = if imaginary {
                        C64::new(-1.0, 0.0)
                    } else {
                        C64::new(0.0, -1.0)
                    };
                    write_rhs(dy, &rhs, factor);
                    Ok(())
                },
                |t, y| {
                    let mut work = scratch.borrow_mut();
                    work.assign_from_flat(&y.view());
                    work.time = t;
                    if imaginary {
                        work.renormalize(&system.grid)?;
                    } else {
                        stabilize_real_time(&mut work, &system.grid)?;
                    }
                    // invariant watch: abort at 100x the orthonormality
                    // tolerance or on clearly negative density eigenvalues
                    let defect = work.orthonormality_defect(&system.grid);
                    if defect > 1e-6 {
                        *viol = Some((t, format!("orthonormality defect {defect:.3e}")));
                        return Err(Error::PropagationAborted {
                            time: t,
                            reason: "orthonormality defect".into(),
                        });
                    }
                    if let Some(d) = last_diag.borrow().as_ref() {
                        if d.min_rho_eigenvalue < -1e-8 || d.min_eta_eigenvalue < -1e-8 {
                            *viol = Some((
                                t,
                                format!(
                                    "density eigenvalue floor violated ({:.3e} / {:.3e})",
                                    d.min_eta_eigenvalue, d.min_rho_eigenvalue
                                ),
                            ));
                            return Err(Error::PropagationAborted {
                                time: t,
                                reason: "density eigenvalue floor".into(),
                            });
                        }
                    }
                    let flat_new = work.flatten();
                    y.assign(&flat_new);
                    Ok(())
                },
                &mut stats,
            )
        };
        match segment {
            Ok(()) => {}
            Err(Error::StepUnderflow { time, .. }) => {
                status = PropagationStatus::StepUnderflow { time };
                break 'outer;
            }
            Err(Error::PropagationAborted { time, .. }) => {
                let what = violation
                    .take()
                    .map(|(_, w)| w)
                    .unwrap_or_else(|| "invariant violation".into());
                status = PropagationStatus::InvariantViolation { time, what };
                break 'outer;
            }
            Err(e) => return Err(e),
        }
        state.assign_from_flat(&flat.view());
        state.time = t_target;
        let prev = trajectory.last_snapshot().cloned();
        let snap = trajectory::snapshot(
            &state,
            system,
            spaces,
            config.record_schmidt_layers,
            prev.as_ref(),
        )?;
        let checkpoint = if config.checkpoint_every > 0 && k % config.checkpoint_every == 0 {
            Some(state.clone())
        } else {
            None
        };
        trajectory.push(snap, checkpoint);
    }

    let steps = PropagationStats {
        steps_accepted: stats.accepted,
        steps_rejected: stats.rejected,
        rhs_evaluations: stats.rhs_evaluations,
        energy_reference: e0,
    };
    trajectory.set_stats(steps);
    Ok(PropagationOutcome {
        trajectory,
        final_state: state,
        status,
    })
}

fn write_rhs(dy: &mut Array1<C64>, rhs: &EomRhs, factor: C64) {
    let mut offset = 0;
    for block in [
        &rhs.top,
        &rhs.coeff_a,
        &rhs.coeff_b,
        &rhs.orbitals_a,
        &rhs.orbitals_b,
    ] {
        for (i, v) in block.iter().enumerate() {
            dy[offset + i] = factor * v;
        }
        offset += block.len();
    }
}

/// Real-time stabilization: renormalize the top layer (an exact invariant of
/// the flow) and Loewdin-correct the basis layers once their Gram defect
/// exceeds the gauge tolerance.
fn stabilize_real_time(state: &mut MixtureState, grid: &Grid) -> Result<()> {
    let n = state.norm();
    if n > 0.0 {
        state.top.mapv_inplace(|z| z / n);
    }
    if row_gram_defect(&state.coeff_a.view(), 1.0) > 1e-8 {
        loewdin_rows(&mut state.coeff_a, 1.0)?;
    }
    if row_gram_defect(&state.coeff_b.view(), 1.0) > 1e-8 {
        loewdin_rows(&mut state.coeff_b, 1.0)?;
    }
    if row_gram_defect(&state.orbitals_a.view(), grid.spacing()) > 1e-8 {
        loewdin_rows(&mut state.orbitals_a, grid.spacing())?;
    }
    if row_gram_defect(&state.orbitals_b.view(), grid.spacing()) > 1e-8 {
        loewdin_rows(&mut state.orbitals_b, grid.spacing())?;
    }
    Ok(())
}

/// Orbital and coefficient truncation of a run.
#[derive(Debug, Clone, Copy)]
pub struct Truncation {
    /// Number of species basis states M (shared by both species).
    pub species_states: usize,
    pub orbitals_a: usize,
    pub orbitals_b: usize,
}

#[derive(Debug, Clone)]
pub struct RelaxOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Convergence threshold on |dE| per unit imaginary time.
    pub energy_rate_tol: f64,
    pub max_imaginary_time: f64,
    /// Amplitude of the seed-state perturbation that unlocks symmetry-locked
    /// saddle points.
    pub perturbation: f64,
    pub seed: u64,
    /// Imaginary-time interval between convergence checks.
    pub check_interval: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            initial_step: 1e-3,
            max_step: 0.05,
            energy_rate_tol: 1e-9,
            max_imaginary_time: 400.0,
            perturbation: 1e-3,
            seed: 1,
            check_interval: 0.5,
        }
    }
}

#[derive(Debug)]
pub struct RelaxOutcome {
    pub state: MixtureState,
    /// (imaginary time, energy) samples at the convergence checks.
    pub energy_history: Vec<(f64, f64)>,
    pub final_rate: f64,
}

/// Seed state for relaxation: lowest trap eigenfunctions as orbitals (bosons
/// condensed, fermions filling the lowest shells), unit top-layer amplitude
/// on the leading SBS pair, and a small deterministic perturbation.
pub fn seed_state(
    system: &MixtureSystem,
    truncation: &Truncation,
    spaces: &EomSpaces,
    perturbation: f64,
    seed: u64,
) -> Result<MixtureState> {
    let m_states = truncation.species_states;
    let ka = spaces.a.basis().len();
    let kb = spaces.b.basis().len();
    if m_states > ka.min(kb) {
        return Err(Error::InvalidBasis(format!(
            "M = {m_states} exceeds min(K_A, K_B) = {}",
            ka.min(kb)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orbitals_a = seed_orbitals(
        &system.grid,
        &system.a.one_body,
        truncation.orbitals_a,
        perturbation,
        &mut rng,
    )?;
    let orbitals_b = seed_orbitals(
        &system.grid,
        &system.b.one_body,
        truncation.orbitals_b,
        perturbation,
        &mut rng,
    )?;
    let coeff_a = seed_coefficients(m_states, ka, perturbation, &mut rng)?;
    let coeff_b = seed_coefficients(m_states, kb, perturbation, &mut rng)?;
    let mut top = Array2::<C64>::zeros((m_states, m_states));
    top[[0, 0]] = C64::new(1.0, 0.0);
    Ok(MixtureState {
        time: 0.0,
        top,
        coeff_a,
        coeff_b,
        orbitals_a,
        orbitals_b,
    })
}

fn seed_orbitals(
    grid: &Grid,
    one_body: &crate::grid::OneBodyOperator,
    m: usize,
    perturbation: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<C64>> {
    let g = grid.len();
    if m == 0 || m > g {
        return Err(Error::InvalidBasis(format!(
            "orbital count {m} out of range for {g} grid points"
        )));
    }
    let dense = one_body.to_dense();
    let (_, vecs) = crate::linalg::symmetric_eig(&dense.view())?;
    let scale = 1.0 / grid.spacing().sqrt();
    let mut orbitals = Array2::from_shape_fn((m, g), |(r, x)| {
        C64::new(vecs[[x, r]] * scale, 0.0)
    });
    if perturbation > 0.0 {
        for r in 0..m {
            for x in 1..g - 1 {
                let noise = C64::new(
                    rng.gen_range(-1.0..1.0) * perturbation,
                    rng.gen_range(-1.0..1.0) * perturbation,
                );
                let local = orbitals[[r, x]].norm().max(0.1) * 0.1;
                orbitals[[r, x]] += noise * local;
            }
        }
        loewdin_rows(&mut orbitals, grid.spacing())?;
    }
    Ok(orbitals)
}

fn seed_coefficients(
    m_states: usize,
    k: usize,
    perturbation: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<C64>> {
    let mut c = Array2::<C64>::zeros((m_states, k));
    for i in 0..m_states {
        c[[i, i]] = C64::new(1.0, 0.0);
    }
    if perturbation > 0.0 && k > 1 {
        for i in 0..m_states {
            for n in 0..k {
                c[[i, n]] += C64::new(
                    rng.gen_range(-1.0..1.0) * perturbation,
                    rng.gen_range(-1.0..1.0) * perturbation,
                );
            }
        }
        loewdin_rows(&mut c, 1.0)?;
    }
    Ok(c)
}

/// Imaginary-time relaxation to the variational ground state.
pub fn relax(
    system: &MixtureSystem,
    truncation: &Truncation,
    spaces: &EomSpaces,
    options: &RelaxOptions,
) -> Result<RelaxOutcome> {
    let mut state = seed_state(system, truncation, spaces, options.perturbation, options.seed)?;
    let reg = RegularizationPolicy::default();
    let (_, diag) = evaluate(&state, system, spaces, &reg)?;
    let mut energy = diag.energy;
    let mut history = vec![(0.0, energy)];
    let mut tau = 0.0;
    let mut rate = f64::INFINITY;

    let config_template = PropagationConfig {
        mode: PropagationMode::ImaginaryTime,
        abs_tol: options.abs_tol,
        rel_tol: options.rel_tol,
        initial_step: options.initial_step,
        max_step: options.max_step,
        output_stride: options.check_interval,
        t_final: 0.0,
        checkpoint_every: 0,
        record_schmidt_layers: false,
    };

    while tau < options.max_imaginary_time {
        let mut config = config_template.clone();
        config.t_final = state.time + options.check_interval;
        let outcome = propagate(&state, system, spaces, &config)?;
        if outcome.status != PropagationStatus::Completed {
            return Err(Error::PropagationAborted {
                time: outcome.final_state.time,
                reason: format!("relaxation interrupted: {:?}", outcome.status),
            });
        }
        state = outcome.final_state;
        tau += options.check_interval;
        let (_, diag) = evaluate(&state, system, spaces, &reg)?;
        let new_energy = diag.energy;
        rate = (new_energy - energy).abs() / options.check_interval;
        history.push((tau, new_energy));
        energy = new_energy;
        if rate < options.energy_rate_tol {
            state.time = 0.0;
            return Ok(RelaxOutcome {
                state,
                energy_history: history,
                final_rate: rate,
            });
        }
    }
    Err(Error::RelaxationStalled {
        elapsed: tau,
        last_rate: rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Statistics;
    use crate::grid::{build_grid, harmonic_potential, kinetic_operator};
    use crate::system::HarmonicSpec;
    use crate::tensors::HamiltonianSbs;
    use crate::test_util::{harmonic_orbitals, test_grid};
    use ndarray::{array, Array4};

    #[test]
    fn regularized_inverse_identity() {
        let eye = Array2::from_shape_fn((3, 3), |(i, j)| {
            C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
        });
        let policy = RegularizationPolicy::default();
        let inv = regularized_inverse(&eye.view(), &policy).unwrap();
        for ((i, j), v) in inv.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C64::new(expect, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn regularized_inverse_floors_singular_directions() {
        let rho = array![
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
        ];
        let policy = RegularizationPolicy { epsilon: 1e-10 };
        let (inv, min_eig) = regularized_inverse_detailed(&rho.view(), &policy).unwrap();
        assert!(min_eig.abs() < 1e-14);
        assert!((inv[[0, 0]].re - 1.0).abs() < 1e-6);
        assert!(inv[[1, 1]].re > 1e9 && inv[[1, 1]].re.is_finite());
    }

    #[test]
    fn regularized_inverse_exact_when_well_conditioned() {
        use crate::fock::test_support::random_orthonormal_rows;
        let u = random_orthonormal_rows(3, 3, 77);
        // PSD with eigenvalues 1, 2, 3
        let mut rho = Array2::<C64>::zeros((3, 3));
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    rho[[i, j]] += u[[k, i]].conj() * u[[k, j]] * (k as f64 + 1.0);
                }
            }
        }
        let policy = RegularizationPolicy::default();
        let inv = regularized_inverse(&rho.view(), &policy).unwrap();
        let prod = rho.dot(&inv);
        for ((i, j), v) in prod.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!(
                (v - C64::new(expect, 0.0)).norm() < 1e-10,
                "residual at ({i},{j}): {v}"
            );
        }
    }

    #[test]
    fn regularized_inverse_rejects_non_hermitian() {
        let rho = array![
            [C64::new(1.0, 0.0), C64::new(0.5, 0.0)],
            [C64::new(0.1, 0.0), C64::new(1.0, 0.0)]
        ];
        let policy = RegularizationPolicy::default();
        assert!(regularized_inverse(&rho.view(), &policy).is_err());
    }

    fn toy_hamiltonian(m: usize) -> HamiltonianSbs {
        HamiltonianSbs {
            tensor: Array4::zeros((m, m, m, m)),
        }
    }

    #[test]
    fn rhs_top_diagonal_phases() {
        let mut h = toy_hamiltonian(2);
        h.tensor[[0, 0, 0, 0]] = C64::new(1.5, 0.0);
        h.tensor[[1, 1, 1, 1]] = C64::new(-0.5, 0.0);
        let a = array![
            [C64::new(0.6, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.8, 0.0)]
        ];
        let da = rhs_top(&a.view(), &h);
        // dA/dt = -i E A elementwise for a diagonal Hamiltonian
        assert!((da[[0, 0]] - C64::new(0.0, -1.5 * 0.6)).norm() < 1e-14);
        assert!((da[[1, 1]] - C64::new(0.0, 0.5 * 0.8)).norm() < 1e-14);
        assert!(da[[0, 1]].norm() < 1e-14);
    }

    #[test]
    fn rhs_top_real_hamiltonian_preserves_norm_exactly() {
        let mut h = toy_hamiltonian(2);
        for ia in 0..2 {
            for ib in 0..2 {
                for ja in 0..2 {
                    for jb in 0..2 {
                        let v = ((ia + ib + ja + jb) as f64 * 0.37).cos();
                        h.tensor[[ia, ib, ja, jb]] = C64::new(v, 0.0);
                    }
                }
            }
        }
        // symmetrize so H is hermitian (real symmetric across pair indices)
        let sym = h.tensor.clone();
        for ia in 0..2 {
            for ib in 0..2 {
                for ja in 0..2 {
                    for jb in 0..2 {
                        h.tensor[[ia, ib, ja, jb]] =
                            (sym[[ia, ib, ja, jb]] + sym[[ja, jb, ia, ib]]) * 0.5;
                    }
                }
            }
        }
        let a = array![
            [C64::new(0.6, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.8, 0.0)]
        ];
        let da = rhs_top(&a.view(), &h);
        let mut ddt_norm = 0.0;
        for (x, dx) in a.iter().zip(da.iter()) {
            ddt_norm += 2.0 * (x.conj() * dx).re;
        }
        assert_eq!(ddt_norm, 0.0);
    }

    #[test]
    fn rabi_oscillation_of_top_layer() {
        let kappa = 0.9;
        let mut h = toy_hamiltonian(2);
        h.tensor[[0, 0, 1, 1]] = C64::new(kappa, 0.0);
        h.tensor[[1, 1, 0, 0]] = C64::new(kappa, 0.0);
        let mut a = Array2::<C64>::zeros((2, 2));
        a[[0, 0]] = C64::new(1.0, 0.0);
        let rk = crate::ode::AdaptiveRk {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            ..Default::default()
        };
        let mut flat = Array1::from_iter(a.iter().cloned());
        let mut stats = crate::ode::StepStats::default();
        let t_final = 4.0;
        rk.integrate(
            &mut flat,
            0.0,
            t_final,
            |_, y, dy| {
                let av = Array2::from_shape_fn((2, 2), |(i, j)| y[i * 2 + j]);
                let da = rhs_top(&av.view(), &h);
                for (i, v) in da.iter().enumerate() {
                    dy[i] = *v;
                }
                Ok(())
            },
            |_, _| Ok(()),
            &mut stats,
        )
        .unwrap();
        let expect = (kappa * t_final).cos().powi(2);
        assert!(
            (flat[0].norm_sqr() - expect).abs() < 1e-7,
            "{} vs {expect}",
            flat[0].norm_sqr()
        );
    }

    /// Single-species reduction: with one orbital and one SBS the orbital
    /// equation collapses to the projected Gross-Pitaevskii equation.
    #[test]
    fn reduces_to_gross_pitaevskii() {
        let grid = test_grid();
        let g_bb = 0.3;
        let spec_a = HarmonicSpec {
            statistics: Statistics::Boson,
            particles: 2,
            mass: 1.0,
            frequency: 1.0,
            offset: 0.0,
            g: g_bb,
        };
        let spec_b = HarmonicSpec {
            statistics: Statistics::Boson,
            particles: 1,
            mass: 1.0,
            frequency: 1.0,
            offset: 0.0,
            g: 0.0,
        };
        let system = MixtureSystem::harmonic(grid.clone(), &spec_a, &spec_b, 0.0).unwrap();
        let spaces = EomSpaces::new(&system, 1, 1).unwrap();
        // displaced ground orbital makes the right-hand side nontrivial
        let phi = harmonic_orbitals(&grid, 1.0, 1.0, 0.7, 1);
        let one = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let state = MixtureState {
            time: 0.0,
            top: one.clone(),
            coeff_a: one.clone(),
            coeff_b: one.clone(),
            orbitals_a: phi.clone(),
            orbitals_b: harmonic_orbitals(&grid, 1.0, 1.0, 0.0, 1),
        };
        let reg = RegularizationPolicy::default();
        let dphi = rhs_orbitals(Species::A, &state, &system, &spaces, &reg).unwrap();

        // direct projected GP right-hand side
        let t = kinetic_operator(&grid, 1.0).unwrap();
        let u = harmonic_potential(&grid, 0.0, 1.0).unwrap();
        let h = t.add(&u).unwrap();
        let mut bracket = h.apply_vec(&phi.row(0));
        let n_minus_1 = 1.0; // N - 1 with N = 2
        for x in 0..grid.len() {
            bracket[x] += phi[[0, x]] * phi[[0, x]].norm_sqr() * (g_bb * n_minus_1);
        }
        let overlap = grid.inner_product(&phi.row(0), &bracket.view());
        let mut expect = bracket;
        for x in 0..grid.len() {
            expect[x] = (expect[x] - overlap * phi[[0, x]]) * C64::new(0.0, -1.0);
        }
        let mut max = 0.0f64;
        for x in 0..grid.len() {
            max = max.max((dphi[[0, x]] - expect[x]).norm());
        }
        assert!(max < 1e-10, "GP reduction defect {max:.3e}");
    }

    /// Gauge residuals: the projected right-hand sides stay orthogonal to the
    /// occupied subspaces.
    #[test]
    fn projected_rhs_is_orthogonal_to_span() {
        let grid = test_grid();
        let spec_a = HarmonicSpec {
            statistics: Statistics::Boson,
            particles: 2,
            mass: 1.0,
            frequency: 1.0,
            offset: 0.4,
            g: 0.4,
        };
        let spec_b = HarmonicSpec {
            statistics: Statistics::Fermion,
            particles: 2,
            mass: 1.0,
            frequency: 1.0,
            offset: -0.4,
            g: 0.0,
        };
        let system = MixtureSystem::harmonic(grid.clone(), &spec_a, &spec_b, 0.8).unwrap();
        let spaces = EomSpaces::new(&system, 3, 3).unwrap();
        let truncation = Truncation {
            species_states: 2,
            orbitals_a: 3,
            orbitals_b: 3,
        };
        let state = seed_state(&system, &truncation, &spaces, 0.05, 11).unwrap();
        // give the top layer some entanglement so every term contributes
        let mut state = state;
        state.top[[0, 0]] = C64::new(0.9, 0.0);
        state.top[[1, 1]] = C64::new(0.3, 0.1);
        state.top[[0, 1]] = C64::new(0.2, -0.15);
        let norm = state.norm();
        state.top.mapv_inplace(|z| z / norm);

        let reg = RegularizationPolicy::default();
        let dca = rhs_species(Species::A, &state, &system, &spaces, &reg).unwrap();
        let dcb = rhs_species(Species::B, &state, &system, &spaces, &reg).unwrap();
        for (dc, c) in [(&dca, &state.coeff_a), (&dcb, &state.coeff_b)] {
            for r in 0..2 {
                for i in 0..2 {
                    let mut overlap = C64::new(0.0, 0.0);
                    for n in 0..c.ncols() {
                        overlap += c[[r, n]].conj() * dc[[i, n]];
                    }
                    assert!(
                        overlap.norm() < 1e-10,
                        "species gauge residual <psi_{r}|dpsi_{i}> = {overlap}"
                    );
                }
            }
        }
        let da = rhs_orbitals(Species::A, &state, &system, &spaces, &reg).unwrap();
        let db = rhs_orbitals(Species::B, &state, &system, &spaces, &reg).unwrap();
        for (dphi, phi) in [(&da, &state.orbitals_a), (&db, &state.orbitals_b)] {
            for r in 0..3 {
                for i in 0..3 {
                    let overlap = grid.inner_product(&phi.row(r), &dphi.row(i));
                    assert!(
                        overlap.norm() < 1e-10,
                        "orbital gauge residual <phi_{r}|dphi_{i}> = {overlap}"
                    );
                }
            }
        }
    }

    /// Untruncated species layer: the coefficients freeze.
    #[test]
    fn untruncated_species_layer_is_frozen() {
        let grid = test_grid();
        let spec_a = HarmonicSpec {
            statistics: Statistics::Boson,
            particles: 1,
            mass: 1.0,
            frequency: 1.0,
            offset: 0.5,
            g: 0.0,
        };
        let spec_b = HarmonicSpec {
            statistics: Statistics::Fermion,
            particles: 1,
            mass: 1.0,
            frequency: 1.0,
            offset: -0.5,
            g: 0.0,
        };
        let system = MixtureSystem::harmonic(grid.clone(), &spec_a, &spec_b, 1.0).unwrap();
        // one particle in two orbitals: K = 2 = M
        let spaces = EomSpaces::new(&system, 2, 2).unwrap();
        let truncation = Truncation {
            species_states: 2,
            orbitals_a: 2,
            orbitals_b: 2,
        };
        let mut state = seed_state(&system, &truncation, &spaces, 0.02, 5).unwrap();
        state.top[[0, 1]] = C64::new(0.4, 0.2);
        state.top[[1, 0]] = C64::new(-0.1, 0.3);
        let norm = state.norm();
        state.top.mapv_inplace(|z| z / norm);
        let reg = RegularizationPolicy::default();
        let dca = rhs_species(Species::A, &state, &system, &spaces, &reg).unwrap();
        let dcb = rhs_species(Species::B, &state, &system, &spaces, &reg).unwrap();
        assert!(dca.iter().all(|z| z.norm() == 0.0));
        assert!(dcb.iter().all(|z| z.norm() == 0.0));
    }

    /// Noninteracting species with eigenstate SBSs: in-span motion only, so
    /// the projected coefficient velocity vanishes.
    #[test]
    fn eigenstate_sbs_do_not_move() {
        let grid = test_grid();
        let spec = HarmonicSpec {
            statistics: Statistics::Boson,
            particles: 2,
            mass: 1.0,
            frequency: 1.0,
            offset: 0.0,
            g: 0.0,
        };
        let system = MixtureSystem::harmonic(grid.clone(), &spec, &spec, 0.0).unwrap();
        let spaces = EomSpaces::new(&system, 2, 2).unwrap();
        // exact trap eigenfunctions; number states are then H_sigma eigenstates
        let phi = harmonic_orbitals(&grid, 1.0, 1.0, 0.0, 2);
        let k = spaces.a.basis().len(); // 3 for two bosons in two orbitals
        let mut c = Array2::<C64>::zeros((2, k));
        c[[0, 0]] = C64::new(1.0, 0.0);
        c[[1, 1]] = C64::new(1.0, 0.0);
        let mut top = Array2::<C64>::zeros((2, 2));
        top[[0, 0]] = C64::new(1.0, 0.0);
        let state = MixtureState {
            time: 0.0,
            top,
            coeff_a: c.clone(),
            coeff_b: c.clone(),
            orbitals_a: phi.clone(),
            orbitals_b: phi.clone(),
        };
        let reg = RegularizationPolicy::default();
        let dca = rhs_species(Species::A, &state, &system, &spaces, &reg).unwrap();
        let max = dca.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        assert!(max < 1e-10, "eigenstate SBS velocity {max:.3e}");
    }
}
