//! Species- and particle-layer density matrices, mean-field operators and the
//! Hamiltonian matrix in species-basis-state (SBS) representation.
//!
//! Index layouts used throughout (m = orbitals per species, M = SBS count):
//! - one-body integrals        h[[r, s]] = <phi_r| h |phi_s>
//! - intra-species integrals   v[[r*m + s, u*m + v]] = <phi_r phi_s| v |phi_u phi_v>
//! - inter-species integrals   w[[r*mB + u, s*mB + v]] = <phi^A_r phi^B_u| w |phi^A_s phi^B_v>
//! - rho2 intra                rho2[[k*m + q, u*m + v]] = <a+_k a+_q a_v a_u>
//! - rho2 inter (A first)      rho2i[[k*mB + q, u*mB + v]] = sum eta2 d1A[..,k,u] d1B[..,q,v]
//!
//! With these conventions every energy contraction is an elementwise product
//! sum and the species equations of motion take the integrals unchanged.

use ndarray::{Array2, Array3, Array4, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::TransitionTensors;
use crate::grid::{Grid, InteractionKernel, OneBodyOperator};
use crate::linalg::dagger;

/// Species-layer reduced density matrices of a binary mixture.
///
/// `eta1_a[[i, j]] = sum_b conj(A[i, b]) A[j, b]` and
/// `eta1_b[[i, j]] = sum_a conj(A[a, i]) A[a, j]`; the two-species density
/// matrix is the rank-one form eta2 = conj(A) (x) A and is kept implicit.
#[derive(Debug, Clone)]
pub struct SpeciesDensities {
    pub eta1_a: Array2<C64>,
    pub eta1_b: Array2<C64>,
    top: Array2<C64>,
}

impl SpeciesDensities {
    pub fn top(&self) -> &Array2<C64> {
        &self.top
    }

    /// Element of the reduced two-species density matrix,
    /// eta2[(ia, ib), (ja, jb)] = conj(A[ia, ib]) A[ja, jb].
    pub fn eta2(&self, ia: usize, ib: usize, ja: usize, jb: usize) -> C64 {
        self.top[[ia, ib]].conj() * self.top[[ja, jb]]
    }

    pub fn species_states(&self) -> usize {
        self.eta1_a.nrows()
    }
}

/// Build the species-layer density matrices from the top-layer coefficients.
pub fn species_densities(a: &ArrayView2<C64>) -> Result<SpeciesDensities> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "top-layer coefficients must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let norm: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(format!(
            "top-layer norm^2 = {norm:.9}, expected 1"
        )));
    }
    let conj_a = a.mapv(|z| z.conj());
    let eta1_a = conj_a.dot(&a.t());
    let eta1_b = dagger(a).dot(a);
    Ok(SpeciesDensities {
        eta1_a,
        eta1_b,
        top: a.to_owned(),
    })
}

/// Particle-layer reduced density matrices of both species.
#[derive(Debug, Clone)]
pub struct ParticleDensities {
    /// rho1[[k, q]] = <a+_k a_q>, trace N_sigma.
    pub rho1_a: Array2<C64>,
    pub rho1_b: Array2<C64>,
    /// Intra-species two-body matrices, trace N_sigma (N_sigma - 1).
    pub rho2_intra_a: Array2<C64>,
    pub rho2_intra_b: Array2<C64>,
    /// Inter-species two-body matrix in A-first layout, trace N_A N_B.
    pub rho2_inter: Array2<C64>,
    orbitals_a: usize,
    orbitals_b: usize,
}

impl ParticleDensities {
    /// Inter-species matrix reindexed for species B.
    pub fn rho2_inter_b_first(&self) -> Array2<C64> {
        flip_inter_layout(&self.rho2_inter.view(), self.orbitals_a, self.orbitals_b)
    }
}

/// Reindex the inter-species two-body matrix from A-first to B-first layout,
/// rho2BA[[k*mA + q, u*mA + v]] = rho2AB[[q*mB + k, v*mB + u]].
pub fn flip_inter_layout(rho2_ab: &ArrayView2<C64>, ma: usize, mb: usize) -> Array2<C64> {
    let mut out = Array2::<C64>::zeros((mb * ma, mb * ma));
    for k in 0..mb {
        for q in 0..ma {
            for u in 0..mb {
                for v in 0..ma {
                    out[[k * ma + q, u * ma + v]] = rho2_ab[[q * mb + k, v * mb + u]];
                }
            }
        }
    }
    out
}

/// Contract a species-layer weight with a one-body transition tensor:
/// rho1[[k, q]] = sum_ij eta[[i, j]] d1[[i, j, k, q]].
pub fn weighted_one_body(eta: &ArrayView2<C64>, d1: &Array4<C64>) -> Array2<C64> {
    let (mi, _, m, _) = d1.dim();
    let mut out = Array2::<C64>::zeros((m, m));
    for i in 0..mi {
        for j in 0..mi {
            let w = eta[[i, j]];
            if w.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..m {
                for q in 0..m {
                    out[[k, q]] += w * d1[[i, j, k, q]];
                }
            }
        }
    }
    out
}

/// Intra-species two-body density matrix from the two-hole representation:
/// rho2 = sum_ij eta[[i, j]] W_i^dagger W_j with W the lift2 matrix blocks.
pub fn rho2_intra_from_holes(
    eta: &ArrayView2<C64>,
    w: &ArrayView2<C64>,
    species_states: usize,
    orbitals: usize,
) -> Array2<C64> {
    let mm = orbitals * orbitals;
    let k2 = w.nrows();
    if k2 == 0 {
        return Array2::zeros((mm, mm));
    }
    // X block for SBS j: X_j = sum_i conj(eta[[i, j]]) W_i
    let mut x = Array2::<C64>::zeros((species_states * k2, mm));
    let mut wbar = Array2::<C64>::zeros((species_states * k2, mm));
    for j in 0..species_states {
        let wj = w.slice(ndarray::s![.., j * mm..(j + 1) * mm]);
        wbar
            .slice_mut(ndarray::s![j * k2..(j + 1) * k2, ..])
            .assign(&wj);
        let mut xj = x.slice_mut(ndarray::s![j * k2..(j + 1) * k2, ..]);
        for i in 0..species_states {
            let coeff = eta[[i, j]].conj();
            if coeff.norm_sqr() == 0.0 {
                continue;
            }
            let wi = w.slice(ndarray::s![.., i * mm..(i + 1) * mm]);
            xj.zip_mut_with(&wi, |acc, v| *acc += coeff * v);
        }
    }
    dagger(&x.view()).dot(&wbar)
}

/// Inter-species two-body density matrix via the d1 tensors,
/// rho2i[[k*mB + q, u*mB + v]] =
///   sum_{iA jA} d1A[[iA, jA, k, u]] sum_{iB jB} conj(A[iA, iB]) A[jA, jB] d1B[[iB, jB, q, v]].
pub fn rho2_inter_via_d1(
    top: &ArrayView2<C64>,
    d1a: &Array4<C64>,
    d1b: &Array4<C64>,
) -> Array2<C64> {
    let (m_states, _, ma, _) = d1a.dim();
    let mb = d1b.dim().2;
    let conj_a = top.mapv(|z| z.conj());
    // t[[ia, ja, q, v]] = (conj(A) D_qv A^T)[[ia, ja]]
    let mut t = Array4::<C64>::zeros((m_states, m_states, mb, mb));
    let mut dqv = Array2::<C64>::zeros((m_states, m_states));
    for q in 0..mb {
        for v in 0..mb {
            for ib in 0..m_states {
                for jb in 0..m_states {
                    dqv[[ib, jb]] = d1b[[ib, jb, q, v]];
                }
            }
            let block = conj_a.dot(&dqv).dot(&top.t());
            for ia in 0..m_states {
                for ja in 0..m_states {
                    t[[ia, ja, q, v]] = block[[ia, ja]];
                }
            }
        }
    }
    let mut out = Array2::<C64>::zeros((ma * mb, ma * mb));
    for ia in 0..m_states {
        for ja in 0..m_states {
            for k in 0..ma {
                for u in 0..ma {
                    let da = d1a[[ia, ja, k, u]];
                    if da.norm_sqr() == 0.0 {
                        continue;
                    }
                    for q in 0..mb {
                        for v in 0..mb {
                            out[[k * mb + q, u * mb + v]] += da * t[[ia, ja, q, v]];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Inter-species two-body density matrix as a Gram product over both hole
/// layers; preferable when the SBS count exceeds the hole-space dimensions.
pub fn rho2_inter_via_holes(
    top: &ArrayView2<C64>,
    ya: &ArrayView2<C64>,
    yb: &ArrayView2<C64>,
    orbitals_a: usize,
    orbitals_b: usize,
) -> Array2<C64> {
    let m_states = top.nrows();
    let k1a = ya.nrows();
    let k1b = yb.nrows();
    // b[[na, jb*ma + u]] = sum_ja A[ja, jb] Ya[na, ja*ma + u]
    let mut bmat = Array2::<C64>::zeros((k1a, m_states * orbitals_a));
    for na in 0..k1a {
        for jb in 0..m_states {
            for u in 0..orbitals_a {
                let mut acc = C64::new(0.0, 0.0);
                for ja in 0..m_states {
                    acc += top[[ja, jb]] * ya[[na, ja * orbitals_a + u]];
                }
                bmat[[na, jb * orbitals_a + u]] = acc;
            }
        }
    }
    // xi[[na*k1b + nb, u*mb + v]] = sum_jb b[[na, jb*ma + u]] Yb[nb, jb*mb + v]
    let mut xi = Array2::<C64>::zeros((k1a * k1b, orbitals_a * orbitals_b));
    for na in 0..k1a {
        for nb in 0..k1b {
            let mut row = xi.row_mut(na * k1b + nb);
            for u in 0..orbitals_a {
                for v in 0..orbitals_b {
                    let mut acc = C64::new(0.0, 0.0);
                    for jb in 0..m_states {
                        acc += bmat[[na, jb * orbitals_a + u]] * yb[[nb, jb * orbitals_b + v]];
                    }
                    row[u * orbitals_b + v] = acc;
                }
            }
        }
    }
    dagger(&xi.view()).dot(&xi)
}

/// Assemble the particle-layer density matrices from the species-layer ones
/// and the transition tensors of both species.
pub fn particle_densities(
    eta: &SpeciesDensities,
    t_a: &TransitionTensors,
    t_b: &TransitionTensors,
) -> Result<ParticleDensities> {
    let m_states = eta.species_states();
    if t_a.one_body.dim().0 != m_states || t_b.one_body.dim().0 != m_states {
        return Err(Error::DimensionMismatch(
            "transition tensors and top-layer coefficients disagree on the SBS count".into(),
        ));
    }
    let ma = t_a.one_body.dim().2;
    let mb = t_b.one_body.dim().2;
    let rho1_a = weighted_one_body(&eta.eta1_a.view(), &t_a.one_body);
    let rho1_b = weighted_one_body(&eta.eta1_b.view(), &t_b.one_body);

    let rho2_intra_a = weighted_two_body(&eta.eta1_a.view(), &t_a.two_body);
    let rho2_intra_b = weighted_two_body(&eta.eta1_b.view(), &t_b.two_body);
    let rho2_inter = rho2_inter_via_d1(&eta.top().view(), &t_a.one_body, &t_b.one_body);

    Ok(ParticleDensities {
        rho1_a,
        rho1_b,
        rho2_intra_a,
        rho2_intra_b,
        rho2_inter,
        orbitals_a: ma,
        orbitals_b: mb,
    })
}

fn weighted_two_body(eta: &ArrayView2<C64>, d2: &ndarray::Array6<C64>) -> Array2<C64> {
    let (mi, _, m, _, _, _) = d2.dim();
    let mut out = Array2::<C64>::zeros((m * m, m * m));
    for i in 0..mi {
        for j in 0..mi {
            let wgt = eta[[i, j]];
            if wgt.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..m {
                for q in 0..m {
                    for u in 0..m {
                        for v in 0..m {
                            // rho2^{kq}_{uv} = <a+_k a+_q a_v a_u>
                            out[[k * m + q, u * m + v]] += wgt * d2[[i, j, k, q, v, u]];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Pair density functions P[[i, j]](x) = sum_{k s} d1[[i, j, k, s]]
/// conj(phi_k(x)) phi_s(x), one grid function per SBS pair.
pub fn pair_density_functions(d1: &Array4<C64>, orbitals: &ArrayView2<C64>) -> Array3<C64> {
    let (mi, _, m, _) = d1.dim();
    let g = orbitals.ncols();
    // tmp[[(i j k), x]] = sum_s d1[[i,j,k,s]] phi_s(x)
    let d1_flat = d1
        .to_shape((mi * mi * m, m))
        .expect("d1 reshape")
        .to_owned();
    let tmp = d1_flat.dot(orbitals);
    let mut out = Array3::<C64>::zeros((mi, mi, g));
    for i in 0..mi {
        for j in 0..mi {
            let mut acc = out.slice_mut(ndarray::s![i, j, ..]);
            for k in 0..m {
                let row = tmp.row((i * mi + j) * m + k);
                let phi = orbitals.row(k);
                for x in 0..g {
                    acc[x] += phi[x].conj() * row[x];
                }
            }
        }
    }
    out
}

/// Apply the interaction kernel to a set of grid functions (rows): the
/// partner-field transform f(x) -> int dy w(x, y) f(y) in grid quadrature.
/// For a contact kernel this is plain scaling by g.
pub fn kernel_transform(grid: &Grid, kernel: &InteractionKernel, f: &ArrayView2<C64>) -> Array2<C64> {
    match kernel {
        InteractionKernel::Contact { strength } => f.mapv(|z| z * *strength),
        InteractionKernel::Tabulated { table } => {
            let re = f.mapv(|z| z.re).dot(table);
            let im = f.mapv(|z| z.im).dot(table);
            let mut out = Array2::<C64>::zeros(f.raw_dim());
            for ((i, j), v) in out.indexed_iter_mut() {
                *v = C64::new(re[[i, j]], im[[i, j]]) * grid.spacing();
            }
            out
        }
    }
}

/// One-body integral matrix h[[r, s]] = <phi_r| op |phi_s>.
pub fn one_body_matrix(
    grid: &Grid,
    op: &OneBodyOperator,
    orbitals: &ArrayView2<C64>,
) -> Array2<C64> {
    let applied = op.apply(orbitals);
    let conj_orbs = orbitals.mapv(|z| z.conj());
    conj_orbs.dot(&applied.t()).mapv(|z| z * grid.spacing())
}

/// Orbital pair products p[[r*m + s, x]] = conj(phi_r(x)) phi_s(x).
pub fn orbital_pair_products(orbitals: &ArrayView2<C64>) -> Array2<C64> {
    let (m, g) = orbitals.dim();
    let mut out = Array2::<C64>::zeros((m * m, g));
    for r in 0..m {
        for s in 0..m {
            let mut row = out.row_mut(r * m + s);
            for x in 0..g {
                row[x] = orbitals[[r, x]].conj() * orbitals[[s, x]];
            }
        }
    }
    out
}

/// Intra-species interaction integrals v[[r*m + s, u*m + v]].
pub fn interaction_matrix(
    grid: &Grid,
    kernel: &InteractionKernel,
    orbitals: &ArrayView2<C64>,
) -> Array2<C64> {
    let m = orbitals.nrows();
    let pairs = orbital_pair_products(orbitals); // (r, u) pairs
    let field = kernel_transform(grid, kernel, &pairs.view());
    // q[[r*m + u, s*m + v]] = dx sum_x pairs[(r,u)] field[(s,v)]
    let q = pairs.dot(&field.t()).mapv(|z| z * grid.spacing());
    let mut out = Array2::<C64>::zeros((m * m, m * m));
    for r in 0..m {
        for s in 0..m {
            for u in 0..m {
                for v in 0..m {
                    out[[r * m + s, u * m + v]] = q[[r * m + u, s * m + v]];
                }
            }
        }
    }
    out
}

/// Inter-species interaction integrals w[[r*mB + u, s*mB + v]].
pub fn inter_interaction_matrix(
    grid: &Grid,
    kernel: &InteractionKernel,
    orbitals_a: &ArrayView2<C64>,
    orbitals_b: &ArrayView2<C64>,
) -> Array2<C64> {
    let ma = orbitals_a.nrows();
    let mb = orbitals_b.nrows();
    let pa = orbital_pair_products(orbitals_a); // (r, s)
    let pb = orbital_pair_products(orbitals_b); // (u, v)
    let field_b = kernel_transform(grid, kernel, &pb.view());
    let q = pa.dot(&field_b.t()).mapv(|z| z * grid.spacing()); // [(r,s), (u,v)]
    let mut out = Array2::<C64>::zeros((ma * mb, ma * mb));
    for r in 0..ma {
        for s in 0..ma {
            for u in 0..mb {
                for v in 0..mb {
                    out[[r * mb + u, s * mb + v]] = q[[r * ma + s, u * mb + v]];
                }
            }
        }
    }
    out
}

/// Mean-field operators of the coupled equations of motion.
///
/// Species layer: `species_ab[[i, j, r, s]]` is the coefficient of a+A_r aA_s
/// in the operator conditioned on the partner-species transition j -> i (and
/// `species_ba` with the roles of A and B swapped). Particle layer:
/// `particle_w_ab[[q, l, x]]` is the effective potential felt by an A
/// particle for the partner-orbital transition l -> q, and `particle_v_*`
/// the intra-species analogue.
#[derive(Debug, Clone)]
pub struct MeanFieldSet {
    pub species_ab: Array4<C64>,
    pub species_ba: Array4<C64>,
    pub particle_v_a: Option<Array3<C64>>,
    pub particle_v_b: Option<Array3<C64>>,
    pub particle_w_ab: Option<Array3<C64>>,
    pub particle_w_ba: Option<Array3<C64>>,
}

/// Particle-layer potentials [v]^q_l(x) = int dy conj(phi_q(y)) w(x, y) phi_l(y).
pub fn particle_mean_fields(
    grid: &Grid,
    kernel: &InteractionKernel,
    partner_orbitals: &ArrayView2<C64>,
) -> Array3<C64> {
    let m = partner_orbitals.nrows();
    let g = partner_orbitals.ncols();
    let pairs = orbital_pair_products(partner_orbitals);
    let field = kernel_transform(grid, kernel, &pairs.view());
    let mut out = Array3::<C64>::zeros((m, m, g));
    for q in 0..m {
        for l in 0..m {
            out.slice_mut(ndarray::s![q, l, ..])
                .assign(&field.row(q * m + l));
        }
    }
    out
}

/// Assemble all mean-field operators for the current orbitals and one-body
/// transition tensors.
pub fn mean_field_set(
    grid: &Grid,
    orbitals_a: &ArrayView2<C64>,
    orbitals_b: &ArrayView2<C64>,
    kernel_a: Option<&InteractionKernel>,
    kernel_b: Option<&InteractionKernel>,
    kernel_ab: Option<&InteractionKernel>,
    d1a: &Array4<C64>,
    d1b: &Array4<C64>,
) -> Result<MeanFieldSet> {
    let m_states = d1a.dim().0;
    let ma = orbitals_a.nrows();
    let mb = orbitals_b.nrows();
    let g = orbitals_a.ncols();
    if orbitals_b.ncols() != g {
        return Err(Error::DimensionMismatch(
            "orbital sets live on different grids".into(),
        ));
    }
    if d1b.dim().0 != m_states {
        return Err(Error::DimensionMismatch(
            "transition tensors disagree on the SBS count".into(),
        ));
    }

    let mut species_ab = Array4::<C64>::zeros((m_states, m_states, ma, ma));
    let mut species_ba = Array4::<C64>::zeros((m_states, m_states, mb, mb));
    let mut particle_w_ab = None;
    let mut particle_w_ba = None;

    if let Some(kernel) = kernel_ab {
        // W_{A|B}^i_j over (r, s) = dx sum_x conj(phiA_r) phiA_s (x) fieldB_ij(x)
        let pb = pair_density_functions(d1b, orbitals_b);
        let pa = pair_density_functions(d1a, orbitals_a);
        let pairs_a = orbital_pair_products(orbitals_a);
        let pairs_b = orbital_pair_products(orbitals_b);
        let pb_flat = pb.to_shape((m_states * m_states, g)).expect("reshape").to_owned();
        let pa_flat = pa.to_shape((m_states * m_states, g)).expect("reshape").to_owned();
        let field_b = kernel_transform(grid, kernel, &pb_flat.view());
        let field_a = kernel_transform(grid, kernel, &pa_flat.view());
        // [(i j), (r s)]
        let wab = field_b.dot(&pairs_a.t()).mapv(|z| z * grid.spacing());
        let wba = field_a.dot(&pairs_b.t()).mapv(|z| z * grid.spacing());
        for i in 0..m_states {
            for j in 0..m_states {
                for r in 0..ma {
                    for s in 0..ma {
                        species_ab[[i, j, r, s]] = wab[[i * m_states + j, r * ma + s]];
                    }
                }
                for u in 0..mb {
                    for v in 0..mb {
                        species_ba[[i, j, u, v]] = wba[[i * m_states + j, u * mb + v]];
                    }
                }
            }
        }
        particle_w_ab = Some(particle_mean_fields(grid, kernel, orbitals_b));
        particle_w_ba = Some(particle_mean_fields(grid, kernel, orbitals_a));
    }

    let particle_v_a = kernel_a.map(|k| particle_mean_fields(grid, k, orbitals_a));
    let particle_v_b = kernel_b.map(|k| particle_mean_fields(grid, k, orbitals_b));

    Ok(MeanFieldSet {
        species_ab,
        species_ba,
        particle_v_a,
        particle_v_b,
        particle_w_ab,
        particle_w_ba,
    })
}

/// Hamiltonian matrix in SBS representation,
/// tensor[[iA, iB, jA, jB]] = <psi^A_iA psi^B_iB| H |psi^A_jA psi^B_jB>.
#[derive(Debug, Clone)]
pub struct HamiltonianSbs {
    pub tensor: Array4<C64>,
}

impl HamiltonianSbs {
    pub fn species_states(&self) -> usize {
        self.tensor.dim().0
    }

    /// (H A)[[iA, iB]] = sum_{jA jB} H[[iA, iB, jA, jB]] A[[jA, jB]].
    pub fn contract(&self, a: &ArrayView2<C64>) -> Array2<C64> {
        let m = self.species_states();
        let h = self
            .tensor
            .to_shape((m * m, m * m))
            .expect("hamiltonian reshape");
        let av = a.to_shape(m * m).expect("top-layer reshape");
        let out = h.dot(&av);
        out.into_shape_with_order((m, m)).expect("result reshape")
    }

    /// <A| H |A>.
    pub fn expectation(&self, a: &ArrayView2<C64>) -> C64 {
        let ha = self.contract(a);
        let mut acc = C64::new(0.0, 0.0);
        for (x, y) in a.iter().zip(ha.iter()) {
            acc += x.conj() * y;
        }
        acc
    }

    /// max |H[[iA,iB,jA,jB]] - conj(H[[jA,jB,iA,iB]])|.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = self.species_states();
        let mut defect: f64 = 0.0;
        for ia in 0..m {
            for ib in 0..m {
                for ja in 0..m {
                    for jb in 0..m {
                        let d = (self.tensor[[ia, ib, ja, jb]]
                            - self.tensor[[ja, jb, ia, ib]].conj())
                        .norm();
                        defect = defect.max(d);
                    }
                }
            }
        }
        defect
    }
}

/// Intra-species SBS block <psi_i| H_sigma + V_sigma |psi_j> from the
/// transition tensors and orbital integrals.
pub fn intra_species_block(
    h_mat: &ArrayView2<C64>,
    v_mat: Option<&Array2<C64>>,
    t: &TransitionTensors,
) -> Array2<C64> {
    let (mi, _, m, _) = t.one_body.dim();
    let mut out = Array2::<C64>::zeros((mi, mi));
    for i in 0..mi {
        for j in 0..mi {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..m {
                for s in 0..m {
                    acc += h_mat[[r, s]] * t.one_body[[i, j, r, s]];
                }
            }
            if let Some(v) = v_mat {
                let mut two = C64::new(0.0, 0.0);
                for r in 0..m {
                    for s in 0..m {
                        for u in 0..m {
                            for vv in 0..m {
                                two += v[[r * m + s, u * m + vv]]
                                    * t.two_body[[i, j, r, s, vv, u]];
                            }
                        }
                    }
                }
                acc += two * 0.5;
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Inter-species SBS coupling in pair layout
/// inter[[iA*M + jA, iB*M + jB]] = sum w^{ru}_{sv} d1A[[iA,jA,r,s]] d1B[[iB,jB,u,v]].
pub fn inter_species_block(
    grid: &Grid,
    kernel: &InteractionKernel,
    orbitals_a: &ArrayView2<C64>,
    orbitals_b: &ArrayView2<C64>,
    d1a: &Array4<C64>,
    d1b: &Array4<C64>,
) -> Array2<C64> {
    let m_states = d1a.dim().0;
    let g = orbitals_a.ncols();
    let pa = pair_density_functions(d1a, orbitals_a)
        .into_shape_with_order((m_states * m_states, g))
        .expect("reshape");
    let pb = pair_density_functions(d1b, orbitals_b)
        .into_shape_with_order((m_states * m_states, g))
        .expect("reshape");
    let field_b = kernel_transform(grid, kernel, &pb.view());
    pa.dot(&field_b.t()).mapv(|z| z * grid.spacing())
}

/// Assemble the Hamiltonian matrix in SBS representation.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_matrix(
    grid: &Grid,
    orbitals_a: &ArrayView2<C64>,
    orbitals_b: &ArrayView2<C64>,
    one_body_a: &OneBodyOperator,
    one_body_b: &OneBodyOperator,
    kernel_a: Option<&InteractionKernel>,
    kernel_b: Option<&InteractionKernel>,
    kernel_ab: Option<&InteractionKernel>,
    t_a: &TransitionTensors,
    t_b: &TransitionTensors,
) -> Result<HamiltonianSbs> {
    let m_states = t_a.one_body.dim().0;
    if t_b.one_body.dim().0 != m_states {
        return Err(Error::DimensionMismatch(
            "transition tensors disagree on the SBS count".into(),
        ));
    }
    let h_a = one_body_matrix(grid, one_body_a, orbitals_a);
    let h_b = one_body_matrix(grid, one_body_b, orbitals_b);
    let v_a = kernel_a.map(|k| interaction_matrix(grid, k, orbitals_a));
    let v_b = kernel_b.map(|k| interaction_matrix(grid, k, orbitals_b));
    let intra_a = intra_species_block(&h_a.view(), v_a.as_ref(), t_a);
    let intra_b = intra_species_block(&h_b.view(), v_b.as_ref(), t_b);
    let inter = kernel_ab.map(|k| {
        inter_species_block(grid, k, orbitals_a, orbitals_b, &t_a.one_body, &t_b.one_body)
    });

    let mut tensor = Array4::<C64>::zeros((m_states, m_states, m_states, m_states));
    for ia in 0..m_states {
        for ib in 0..m_states {
            for ja in 0..m_states {
                for jb in 0..m_states {
                    let mut acc = C64::new(0.0, 0.0);
                    if ib == jb {
                        acc += intra_a[[ia, ja]];
                    }
                    if ia == ja {
                        acc += intra_b[[ib, jb]];
                    }
                    if let Some(w) = &inter {
                        acc += w[[ia * m_states + ja, ib * m_states + jb]];
                    }
                    tensor[[ia, ib, ja, jb]] = acc;
                }
            }
        }
    }
    Ok(HamiltonianSbs { tensor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::test_support::random_orthonormal_rows;
    use crate::fock::{transition_tensors, FockSpace, SpeciesCoefficients, Statistics};
    use crate::grid::{build_grid, harmonic_potential, kinetic_operator};
    use crate::linalg::{hermitian_eig, hermiticity_defect};
    use crate::test_util::{harmonic_orbitals, random_orbitals, random_top, test_grid};
    use ndarray::Array2;

    #[test]
    fn product_state_species_density() {
        let mut a = Array2::<C64>::zeros((3, 3));
        a[[0, 0]] = C64::new(1.0, 0.0);
        let eta = species_densities(&a.view()).unwrap();
        assert!((eta.eta1_a[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-14);
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (0, 0) {
                    assert!(eta.eta1_a[[i, j]].norm() < 1e-14);
                    assert!(eta.eta1_b[[i, j]].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn balanced_two_state_spectrum() {
        let mut a = Array2::<C64>::zeros((2, 2));
        let r = 1.0 / 2f64.sqrt();
        a[[0, 0]] = C64::new(r, 0.0);
        a[[1, 1]] = C64::new(r, 0.0);
        let eta = species_densities(&a.view()).unwrap();
        let (vals, _) = hermitian_eig(&eta.eta1_a.view()).unwrap();
        assert!((vals[0] - 0.5).abs() < 1e-12);
        assert!((vals[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_top_rejected() {
        let mut a = Array2::<C64>::zeros((2, 2));
        a[[0, 0]] = C64::new(2.0, 0.0);
        assert!(species_densities(&a.view()).is_err());
    }

    #[test]
    fn schmidt_spectra_coincide() {
        for seed in [1u64, 2, 3] {
            let a = random_top(4, seed);
            let eta = species_densities(&a.view()).unwrap();
            let (va, _) = hermitian_eig(&eta.eta1_a.view()).unwrap();
            let (vb, _) = hermitian_eig(&eta.eta1_b.view()).unwrap();
            for k in 0..4 {
                assert!((va[k] - vb[k]).abs() < 1e-10, "seed {seed}: {va:?} vs {vb:?}");
            }
        }
    }

    #[test]
    fn condensate_particle_density() {
        let space = FockSpace::new(Statistics::Boson, 2, 2).unwrap();
        let mut c = Array2::<C64>::zeros((1, 3));
        c[[0, 0]] = C64::new(1.0, 0.0);
        let coeffs = SpeciesCoefficients::new(c).unwrap();
        let t = transition_tensors(&coeffs, &space).unwrap();
        let mut a = Array2::<C64>::zeros((1, 1));
        a[[0, 0]] = C64::new(1.0, 0.0);
        let eta = species_densities(&a.view()).unwrap();
        let rho = particle_densities(&eta, &t, &t).unwrap();
        assert!((rho.rho1_a[[0, 0]] - C64::new(2.0, 0.0)).norm() < 1e-13);
        assert!(rho.rho1_a[[1, 1]].norm() < 1e-13);
        assert!(rho.rho1_a[[0, 1]].norm() < 1e-13);
    }

    #[test]
    fn filled_fermi_sea_occupations() {
        let space = FockSpace::new(Statistics::Fermion, 2, 3).unwrap();
        let mut c = Array2::<C64>::zeros((1, 3));
        c[[0, 0]] = C64::new(1.0, 0.0); // |110>
        let coeffs = SpeciesCoefficients::new(c).unwrap();
        let t = transition_tensors(&coeffs, &space).unwrap();
        let mut a = Array2::<C64>::zeros((1, 1));
        a[[0, 0]] = C64::new(1.0, 0.0);
        let eta = species_densities(&a.view()).unwrap();
        let rho = particle_densities(&eta, &t, &t).unwrap();
        assert!((rho.rho1_a[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-13);
        assert!((rho.rho1_a[[1, 1]] - C64::new(1.0, 0.0)).norm() < 1e-13);
        assert!(rho.rho1_a[[2, 2]].norm() < 1e-13);
    }

    fn random_mixture(
        seed: u64,
    ) -> (
        SpeciesDensities,
        TransitionTensors,
        TransitionTensors,
        (u32, u32),
    ) {
        let m_states = 3;
        let space_a = FockSpace::new(Statistics::Boson, 3, 3).unwrap();
        let space_b = FockSpace::new(Statistics::Fermion, 2, 4).unwrap();
        let ca = random_orthonormal_rows(m_states, space_a.basis().len(), seed);
        let cb = random_orthonormal_rows(m_states, space_b.basis().len(), seed + 100);
        let ta = transition_tensors(&SpeciesCoefficients::new(ca).unwrap(), &space_a).unwrap();
        let tb = transition_tensors(&SpeciesCoefficients::new(cb).unwrap(), &space_b).unwrap();
        let a = random_top(m_states, seed + 200);
        let eta = species_densities(&a.view()).unwrap();
        (eta, ta, tb, (3, 2))
    }

    #[test]
    fn particle_density_traces() {
        for seed in [5u64, 9] {
            let (eta, ta, tb, (na, nb)) = random_mixture(seed);
            let rho = particle_densities(&eta, &ta, &tb).unwrap();
            let tr1a: C64 = (0..3).map(|k| rho.rho1_a[[k, k]]).sum();
            let tr1b: C64 = (0..4).map(|k| rho.rho1_b[[k, k]]).sum();
            assert!((tr1a - C64::new(na as f64, 0.0)).norm() < 1e-10);
            assert!((tr1b - C64::new(nb as f64, 0.0)).norm() < 1e-10);
            let tr2a: C64 = (0..9).map(|p| rho.rho2_intra_a[[p, p]]).sum();
            assert!((tr2a - C64::new((na * (na - 1)) as f64, 0.0)).norm() < 1e-10);
            let tr2b: C64 = (0..16).map(|p| rho.rho2_intra_b[[p, p]]).sum();
            assert!((tr2b - C64::new((nb * (nb - 1)) as f64, 0.0)).norm() < 1e-10);
            let tr2i: C64 = (0..12).map(|p| rho.rho2_inter[[p, p]]).sum();
            assert!((tr2i - C64::new((na * nb) as f64, 0.0)).norm() < 1e-10);
            // hermitian and positive semidefinite
            for mat in [&rho.rho1_a, &rho.rho1_b, &rho.rho2_intra_a, &rho.rho2_inter] {
                assert!(hermiticity_defect(&mat.view()) < 1e-10);
                let (vals, _) = hermitian_eig(&mat.view()).unwrap();
                assert!(vals[0] > -1e-10, "eigenvalue floor violated: {}", vals[0]);
            }
        }
    }

    #[test]
    fn rho2_inter_routes_agree() {
        let (eta, ta, tb, _) = random_mixture(31);
        let via_d1 = rho2_inter_via_d1(&eta.top().view(), &ta.one_body, &tb.one_body);
        let space_a = FockSpace::new(Statistics::Boson, 3, 3).unwrap();
        let space_b = FockSpace::new(Statistics::Fermion, 2, 4).unwrap();
        let ca = random_orthonormal_rows(3, space_a.basis().len(), 31);
        let cb = random_orthonormal_rows(3, space_b.basis().len(), 131);
        let ya = space_a.lift1_matrix(&ca.view());
        let yb = space_b.lift1_matrix(&cb.view());
        let via_holes = rho2_inter_via_holes(&eta.top().view(), &ya.view(), &yb.view(), 3, 4);
        let mut max = 0f64;
        for (x, y) in via_d1.iter().zip(via_holes.iter()) {
            max = max.max((x - y).norm());
        }
        assert!(max < 1e-11, "route disagreement {max:.3e}");
    }

    #[test]
    fn gp_coupling_mean_field() {
        let grid = test_grid();
        let phi_a = harmonic_orbitals(&grid, 1.0, 1.0, 0.0, 1);
        let phi_b = harmonic_orbitals(&grid, 1.0, 1.0, 0.5, 1);
        let g_ab = 0.8;
        let kernel = InteractionKernel::contact(g_ab);
        // single condensed SBS per species
        let d1 = Array4::from_elem((1, 1, 1, 1), C64::new(2.0, 0.0)); // N = 2
        let mf = mean_field_set(
            &grid,
            &phi_a.view(),
            &phi_b.view(),
            None,
            None,
            Some(&kernel),
            &d1,
            &d1,
        )
        .unwrap();
        let w = mf.particle_w_ab.as_ref().unwrap();
        for x in 0..grid.len() {
            let expect = phi_b[[0, x]].conj() * phi_b[[0, x]] * g_ab;
            assert!((w[[0, 0, x]] - expect).norm() < 1e-12);
        }
        // hermitian pairing of the grid functions
        for x in 0..grid.len() {
            assert!((w[[0, 0, x]] - w[[0, 0, x]].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_gives_zero_mean_fields() {
        let grid = test_grid();
        let phi = harmonic_orbitals(&grid, 1.0, 1.0, 0.0, 2);
        let d1 = Array4::from_elem((1, 1, 2, 2), C64::new(0.5, 0.0));
        let kernel = InteractionKernel::contact(0.0);
        let mf = mean_field_set(
            &grid,
            &phi.view(),
            &phi.view(),
            None,
            None,
            Some(&kernel),
            &d1,
            &d1,
        )
        .unwrap();
        assert!(mf.species_ab.iter().all(|z| z.norm() < 1e-15));
        assert!(mf
            .particle_w_ab
            .as_ref()
            .unwrap()
            .iter()
            .all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn species_mean_field_hermitian_on_diagonal() {
        let grid = test_grid();
        let phi_a = random_orbitals(&grid, 3, 41);
        let phi_b = random_orbitals(&grid, 4, 42);
        let space_a = FockSpace::new(Statistics::Boson, 2, 3).unwrap();
        let space_b = FockSpace::new(Statistics::Fermion, 2, 4).unwrap();
        let ca = random_orthonormal_rows(2, space_a.basis().len(), 43);
        let cb = random_orthonormal_rows(2, space_b.basis().len(), 44);
        let d1a = space_a.one_body_tensor(&ca.view());
        let d1b = space_b.one_body_tensor(&cb.view());
        let kernel = InteractionKernel::contact(1.3);
        let mf = mean_field_set(
            &grid,
            &phi_a.view(),
            &phi_b.view(),
            None,
            None,
            Some(&kernel),
            &d1a,
            &d1b,
        )
        .unwrap();
        // diagonal (i = j) blocks are hermitian coefficient matrices
        for i in 0..2 {
            let block_ba = Array2::from_shape_fn((4, 4), |(r, s)| mf.species_ba[[i, i, r, s]]);
            assert!(hermiticity_defect(&block_ba.view()) < 1e-12);
            let block_ab = Array2::from_shape_fn((3, 3), |(r, s)| mf.species_ab[[i, i, r, s]]);
            assert!(hermiticity_defect(&block_ab.view()) < 1e-12);
        }
    }

    #[test]
    fn ideal_mixture_energy() {
        let grid = build_grid(8.0, 256).unwrap();
        let t_op = kinetic_operator(&grid, 1.0).unwrap();
        let u_op = harmonic_potential(&grid, 0.0, 1.0).unwrap();
        let h_op = t_op.add(&u_op).unwrap();
        // species A: two condensed bosons in the ground orbital
        let phi_a = harmonic_orbitals(&grid, 1.0, 1.0, 0.0, 1);
        let space_a = FockSpace::new(Statistics::Boson, 2, 1).unwrap();
        let ca = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let ta = transition_tensors(&SpeciesCoefficients::new(ca).unwrap(), &space_a).unwrap();
        // species B: two fermions filling the lowest two orbitals
        let phi_b = harmonic_orbitals(&grid, 1.0, 1.0, 0.0, 2);
        let space_b = FockSpace::new(Statistics::Fermion, 2, 2).unwrap();
        let cb = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let tb = transition_tensors(&SpeciesCoefficients::new(cb).unwrap(), &space_b).unwrap();
        let h = hamiltonian_matrix(
            &grid,
            &phi_a.view(),
            &phi_b.view(),
            &h_op,
            &h_op,
            None,
            None,
            None,
            &ta,
            &tb,
        )
        .unwrap();
        let a = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let e = h.expectation(&a.view());
        assert!((e.re - 3.0).abs() < 1e-8, "E = {}", e.re);
        assert!(e.im.abs() < 1e-12);
    }

    #[test]
    fn displaced_condensate_quench_energy() {
        let grid = build_grid(8.0, 256).unwrap();
        let t_op = kinetic_operator(&grid, 1.0).unwrap();
        let u_centered = harmonic_potential(&grid, 0.0, 1.0).unwrap();
        let h_centered = t_op.add(&u_centered).unwrap();
        let phi = harmonic_orbitals(&grid, 1.0, 1.0, 2.0, 1);
        let space = FockSpace::new(Statistics::Boson, 2, 1).unwrap();
        let c = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let t = transition_tensors(&SpeciesCoefficients::new(c).unwrap(), &space).unwrap();
        let h_mat = one_body_matrix(&grid, &h_centered, &phi.view());
        let intra = intra_species_block(&h_mat.view(), None, &t);
        assert!((intra[[0, 0]].re - 5.0).abs() < 1e-8, "E = {}", intra[[0, 0]].re);
    }

    #[test]
    fn energy_routes_agree() {
        let grid = test_grid();
        let t_op = kinetic_operator(&grid, 1.0).unwrap();
        let u_op = harmonic_potential(&grid, 0.3, 1.0).unwrap();
        let h_op = t_op.add(&u_op).unwrap();
        let phi_a = random_orbitals(&grid, 3, 51);
        let phi_b = random_orbitals(&grid, 4, 52);
        let space_a = FockSpace::new(Statistics::Boson, 3, 3).unwrap();
        let space_b = FockSpace::new(Statistics::Fermion, 2, 4).unwrap();
        let ca = random_orthonormal_rows(3, space_a.basis().len(), 53);
        let cb = random_orthonormal_rows(3, space_b.basis().len(), 54);
        let ta = transition_tensors(&SpeciesCoefficients::new(ca).unwrap(), &space_a).unwrap();
        let tb = transition_tensors(&SpeciesCoefficients::new(cb).unwrap(), &space_b).unwrap();
        let a = random_top(3, 55);
        let eta = species_densities(&a.view()).unwrap();
        let ka = InteractionKernel::contact(0.4);
        let kb = InteractionKernel::contact(0.7);
        let kab = InteractionKernel::contact(1.1);

        let h = hamiltonian_matrix(
            &grid,
            &phi_a.view(),
            &phi_b.view(),
            &h_op,
            &h_op,
            Some(&ka),
            Some(&kb),
            Some(&kab),
            &ta,
            &tb,
        )
        .unwrap();
        assert!(h.hermiticity_defect() < 1e-10);
        let e1 = h.expectation(&a.view());
        assert!(e1.im.abs() < 1e-10);

        // independent route through the reduced density matrices
        let rho = particle_densities(&eta, &ta, &tb).unwrap();
        let ha = one_body_matrix(&grid, &h_op, &phi_a.view());
        let hb = one_body_matrix(&grid, &h_op, &phi_b.view());
        let va = interaction_matrix(&grid, &ka, &phi_a.view());
        let vb = interaction_matrix(&grid, &kb, &phi_b.view());
        let wab = inter_interaction_matrix(&grid, &kab, &phi_a.view(), &phi_b.view());
        let mut e2 = C64::new(0.0, 0.0);
        for (x, y) in ha.iter().zip(rho.rho1_a.iter()) {
            e2 += x * y;
        }
        for (x, y) in hb.iter().zip(rho.rho1_b.iter()) {
            e2 += x * y;
        }
        for (x, y) in va.iter().zip(rho.rho2_intra_a.iter()) {
            e2 += 0.5 * x * y;
        }
        for (x, y) in vb.iter().zip(rho.rho2_intra_b.iter()) {
            e2 += 0.5 * x * y;
        }
        for (x, y) in wab.iter().zip(rho.rho2_inter.iter()) {
            e2 += x * y;
        }
        let rel = (e1 - e2).norm() / e1.norm();
        assert!(rel < 1e-10, "route mismatch: {e1} vs {e2} (rel {rel:.3e})");
    }
}
