//! Occupation-number bases, second-quantization phase factors and reduced
//! transition matrices for a single species of indistinguishable particles.
//!
//! Number states are labelled by occupation vectors n = (n_1, ..., n_m) with
//! sum N. For fermions the creation-operator string of a number state is
//! ordered by ascending orbital index; every sign in this module derives from
//! that single convention.

use std::collections::HashMap;

use ndarray::{Array2, Array4, Array6, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::dagger;

pub type Occupation = Vec<u32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statistics {
    Boson,
    Fermion,
}

impl Statistics {
    pub fn is_fermionic(self) -> bool {
        matches!(self, Statistics::Fermion)
    }
}

/// Complete enumeration of the number states of N particles in m orbitals,
/// ordered by lexicographically descending occupations.
#[derive(Debug, Clone)]
pub struct FockBasis {
    statistics: Statistics,
    particles: u32,
    orbitals: usize,
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl FockBasis {
    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn particles(&self) -> u32 {
        self.particles
    }

    pub fn orbitals(&self) -> usize {
        self.orbitals
    }

    /// Number of states K.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i]
    }

    pub fn states(&self) -> impl Iterator<Item = &Occupation> {
        self.states.iter()
    }

    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        self.index.get(occ).copied()
    }
}

/// Enumerate the occupation-number basis for `particles` particles of the
/// given statistics in `orbitals` single-particle states.
pub fn enumerate_basis(
    statistics: Statistics,
    particles: u32,
    orbitals: usize,
) -> Result<FockBasis> {
    if orbitals == 0 {
        return Err(Error::InvalidBasis("need at least one orbital".into()));
    }
    if statistics.is_fermionic() && (orbitals as u32) < particles {
        return Err(Error::InvalidBasis(format!(
            "{particles} fermions need at least {particles} orbitals, got {orbitals}"
        )));
    }
    let cap = match statistics {
        Statistics::Boson => particles,
        Statistics::Fermion => 1.min(particles),
    };
    let mut states = Vec::new();
    let mut current = vec![0u32; orbitals];
    fill_descending(&mut states, &mut current, 0, particles, cap);
    let index = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    Ok(FockBasis {
        statistics,
        particles,
        orbitals,
        states,
        index,
    })
}

fn fill_descending(
    out: &mut Vec<Occupation>,
    current: &mut Occupation,
    slot: usize,
    remaining: u32,
    cap: u32,
) {
    if slot == current.len() {
        if remaining == 0 {
            out.push(current.clone());
        }
        return;
    }
    let max_here = remaining.min(cap);
    for occ in (0..=max_here).rev() {
        current[slot] = occ;
        fill_descending(out, current, slot + 1, remaining - occ, cap);
    }
    current[slot] = 0;
}

fn check_orbital_pair(n_len: usize, k: usize, q: usize) -> Result<()> {
    for idx in [k, q] {
        if idx >= n_len {
            return Err(Error::OrbitalIndex {
                index: idx,
                count: n_len,
            });
        }
    }
    Ok(())
}

/// Number of occupied orbitals strictly between k and q.
fn between_count(n: &[u32], k: usize, q: usize) -> u32 {
    let (lo, hi) = if k < q { (k, q) } else { (q, k) };
    n[lo + 1..hi].iter().sum()
}

/// Occupation factor Q_n(k, q) entering the one-body transition matrices;
/// `n` is an (N-1)-particle occupation vector.
pub fn phase_q(n: &[u32], k: usize, q: usize, statistics: Statistics) -> Result<f64> {
    check_orbital_pair(n.len(), k, q)?;
    Ok(match statistics {
        Statistics::Boson => (((n[k] + 1) * (n[q] + 1)) as f64).sqrt(),
        Statistics::Fermion => {
            if between_count(n, k, q) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    })
}

/// Occupation factor P_n(k, q) entering the two-body transition matrices;
/// `n` is an (N-2)-particle occupation vector.
pub fn phase_p(n: &[u32], k: usize, q: usize, statistics: Statistics) -> Result<f64> {
    check_orbital_pair(n.len(), k, q)?;
    Ok(match statistics {
        Statistics::Boson => {
            let delta = if k == q { 1 } else { 0 };
            (((n[k] + 1 + delta) * (n[q] + 1)) as f64).sqrt()
        }
        Statistics::Fermion => {
            if k == q {
                return Ok(0.0);
            }
            let theta = if k > q { 1 } else { 0 };
            if (between_count(n, k, q) + theta) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    })
}

/// Species-layer expansion coefficients: M orthonormal rows over the K number
/// states of one species.
#[derive(Debug, Clone)]
pub struct SpeciesCoefficients {
    matrix: Array2<C64>,
}

impl SpeciesCoefficients {
    /// Wrap a coefficient matrix, requiring pairwise orthonormal rows.
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let defect = crate::linalg::row_gram_defect(&matrix.view(), 1.0);
        if defect > 1e-8 {
            return Err(Error::NotNormalized(format!(
                "species coefficient rows deviate from orthonormality by {defect:.3e}"
            )));
        }
        Ok(SpeciesCoefficients { matrix })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    /// Number of species basis states M.
    pub fn count(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Reduced one- and two-body transition matrices between species basis states.
///
/// `one_body[[i, j, k, q]]` is the matrix element of a+_k a_q between SBS i
/// and j; `two_body[[i, j, k, q, qp, kp]]` the one of a+_k a+_q a_qp a_kp.
#[derive(Debug, Clone)]
pub struct TransitionTensors {
    pub one_body: Array4<C64>,
    pub two_body: Array6<C64>,
}

type LiftEntry = Option<(u32, f64)>;

/// A number-state basis bundled with its one- and two-hole sub-bases and the
/// precomputed index/factor tables that connect them.
///
/// `lift1[n1 * m + k]` maps an (N-1)-particle state n1 and orbital k to the
/// index of n1 + e_k in the N-particle basis together with the factor f(n1, k)
/// satisfying f(n1, k) f(n1, q) = Q_n1(k, q) on all nonvanishing terms.
/// `lift2[(n2 * m + k) * m + q]` maps an (N-2)-particle state to n2 + e_k +
/// e_q with the joint factor P_n2(k, q).
#[derive(Debug, Clone)]
pub struct FockSpace {
    basis: FockBasis,
    minus1: FockBasis,
    minus2: Option<FockBasis>,
    lift1: Vec<LiftEntry>,
    lift2: Vec<LiftEntry>,
}

impl FockSpace {
    pub fn new(statistics: Statistics, particles: u32, orbitals: usize) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidBasis("need at least one particle".into()));
        }
        let basis = enumerate_basis(statistics, particles, orbitals)?;
        let minus1 = enumerate_basis(statistics, particles - 1, orbitals)?;
        let minus2 = if particles >= 2 {
            Some(enumerate_basis(statistics, particles - 2, orbitals)?)
        } else {
            None
        };
        let m = orbitals;
        let fermionic = statistics.is_fermionic();

        let mut lift1 = vec![None; minus1.len() * m];
        let mut scratch: Occupation = vec![0; m];
        for (i1, n1) in minus1.states.iter().enumerate() {
            // fermionic factor (-1)^(sum of occupations below k)
            let mut prefix_sign = 1.0f64;
            for k in 0..m {
                let factor = if fermionic {
                    if n1[k] == 1 {
                        prefix_sign = -prefix_sign;
                        continue;
                    }
                    prefix_sign
                } else {
                    ((n1[k] + 1) as f64).sqrt()
                };
                scratch.clone_from_slice(n1);
                scratch[k] += 1;
                let target = basis
                    .index_of(&scratch)
                    .expect("lifted occupation must exist in the N-particle basis");
                lift1[i1 * m + k] = Some((target as u32, factor));
            }
        }

        let mut lift2 = Vec::new();
        if let Some(b2) = &minus2 {
            lift2 = vec![None; b2.len() * m * m];
            for (i2, n2) in b2.states.iter().enumerate() {
                for k in 0..m {
                    for q in 0..m {
                        if fermionic && (k == q || n2[k] == 1 || n2[q] == 1) {
                            continue;
                        }
                        let factor = phase_p(n2, k, q, statistics)?;
                        scratch.clone_from_slice(n2);
                        scratch[k] += 1;
                        scratch[q] += 1;
                        let target = basis
                            .index_of(&scratch)
                            .expect("doubly lifted occupation must exist");
                        lift2[(i2 * m + k) * m + q] = Some((target as u32, factor));
                    }
                }
            }
        }

        Ok(FockSpace {
            basis,
            minus1,
            minus2,
            lift1,
            lift2,
        })
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn hole_basis(&self) -> &FockBasis {
        &self.minus1
    }

    pub fn pair_hole_basis(&self) -> Option<&FockBasis> {
        self.minus2.as_ref()
    }

    pub fn orbitals(&self) -> usize {
        self.basis.orbitals
    }

    pub fn particles(&self) -> u32 {
        self.basis.particles
    }

    pub fn statistics(&self) -> Statistics {
        self.basis.statistics
    }

    /// Gathered one-hole representation of coefficient rows: the matrix
    /// Y[n1, i*m + k] = f(n1, k) c_i(n1 + e_k), with zeros on invalid lifts.
    pub fn lift1_matrix(&self, c: &ArrayView2<C64>) -> Array2<C64> {
        let m = self.orbitals();
        let rows = c.nrows();
        let k1 = self.minus1.len();
        let mut y = Array2::<C64>::zeros((k1, rows * m));
        for n1 in 0..k1 {
            for k in 0..m {
                if let Some((target, factor)) = self.lift1[n1 * m + k] {
                    for i in 0..rows {
                        y[[n1, i * m + k]] = c[[i, target as usize]] * factor;
                    }
                }
            }
        }
        y
    }

    /// Gathered two-hole representation: W[n2, i*m^2 + k*m + q] =
    /// P_n2(k, q) c_i(n2 + e_k + e_q).
    pub fn lift2_matrix(&self, c: &ArrayView2<C64>) -> Array2<C64> {
        let m = self.orbitals();
        let rows = c.nrows();
        let k2 = self.minus2.as_ref().map_or(0, |b| b.len());
        let mut w = Array2::<C64>::zeros((k2, rows * m * m));
        for n2 in 0..k2 {
            for kq in 0..m * m {
                if let Some((target, factor)) = self.lift2[n2 * m * m + kq] {
                    for i in 0..rows {
                        w[[n2, i * m * m + kq]] = c[[i, target as usize]] * factor;
                    }
                }
            }
        }
        w
    }

    /// Apply sum_{kq} h_kq a+_k a_q to each coefficient row.
    pub fn apply_one_body(&self, h: &ArrayView2<C64>, c: &ArrayView2<C64>) -> Array2<C64> {
        let m = self.orbitals();
        let rows = c.nrows();
        let k1 = self.minus1.len();
        let mut out = Array2::<C64>::zeros(c.raw_dim());
        let mut gathered = vec![C64::new(0.0, 0.0); m];
        let mut mixed = vec![C64::new(0.0, 0.0); m];
        for r in 0..rows {
            for n1 in 0..k1 {
                let table = &self.lift1[n1 * m..(n1 + 1) * m];
                for (q, slot) in table.iter().enumerate() {
                    gathered[q] = match slot {
                        Some((t, f)) => c[[r, *t as usize]] * *f,
                        None => C64::new(0.0, 0.0),
                    };
                }
                for k in 0..m {
                    let mut acc = C64::new(0.0, 0.0);
                    for q in 0..m {
                        acc += h[[k, q]] * gathered[q];
                    }
                    mixed[k] = acc;
                }
                for (k, slot) in table.iter().enumerate() {
                    if let Some((t, f)) = slot {
                        out[[r, *t as usize]] += mixed[k] * *f;
                    }
                }
            }
        }
        out
    }

    /// Apply sum_{kq,uv} vmix[(k,q),(u,v)] a+_k a+_q a_v a_u to each row;
    /// `vmix` must already contain any prefactors (e.g. the 1/2 of the
    /// intra-species interaction).
    pub fn apply_two_body(&self, vmix: &ArrayView2<C64>, c: &ArrayView2<C64>) -> Array2<C64> {
        let m = self.orbitals();
        let mm = m * m;
        let rows = c.nrows();
        let mut out = Array2::<C64>::zeros(c.raw_dim());
        let k2 = match &self.minus2 {
            Some(b) => b.len(),
            None => return out,
        };
        // gather -> one GEMM -> scatter
        let mut gathered = Array2::<C64>::zeros((rows * k2, mm));
        for r in 0..rows {
            for n2 in 0..k2 {
                let table = &self.lift2[n2 * mm..(n2 + 1) * mm];
                let mut row = gathered.row_mut(r * k2 + n2);
                for (uv, slot) in table.iter().enumerate() {
                    if let Some((t, f)) = slot {
                        row[uv] = c[[r, *t as usize]] * *f;
                    }
                }
            }
        }
        let mixed = gathered.dot(&vmix.t());
        for r in 0..rows {
            for n2 in 0..k2 {
                let table = &self.lift2[n2 * mm..(n2 + 1) * mm];
                let row = mixed.row(r * k2 + n2);
                for (kq, slot) in table.iter().enumerate() {
                    if let Some((t, f)) = slot {
                        out[[r, *t as usize]] += row[kq] * *f;
                    }
                }
            }
        }
        out
    }

    /// Reduced one-body transition tensor d1[[i, j, k, q]] = <psi_i| a+_k a_q |psi_j>.
    pub fn one_body_tensor(&self, c: &ArrayView2<C64>) -> Array4<C64> {
        let m = self.orbitals();
        let rows = c.nrows();
        let y = self.lift1_matrix(c);
        let gram = dagger(&y.view()).dot(&y);
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

    /// Reduced two-body transition tensor
    /// d2[[i, j, k, q, qp, kp]] = <psi_i| a+_k a+_q a_qp a_kp |psi_j>.
    pub fn two_body_tensor(&self, c: &ArrayView2<C64>) -> Array6<C64> {
        let m = self.orbitals();
        let mm = m * m;
        let rows = c.nrows();
        let mut d2 = Array6::<C64>::zeros((rows, rows, m, m, m, m));
        if self.minus2.is_none() {
            return d2;
        }
        let w = self.lift2_matrix(c);
        let gram = dagger(&w.view()).dot(&w);
        for i in 0..rows {
            for j in 0..rows {
                for k in 0..m {
                    for q in 0..m {
                        for kp in 0..m {
                            for qp in 0..m {
                                d2[[i, j, k, q, qp, kp]] =
                                    gram[[i * mm + k * m + q, j * mm + kp * m + qp]];
                            }
                        }
                    }
                }
            }
        }
        d2
    }
}

/// Assemble the reduced transition matrices for a coefficient set over a
/// number-state basis.
pub fn transition_tensors(
    coefficients: &SpeciesCoefficients,
    space: &FockSpace,
) -> Result<TransitionTensors> {
    if coefficients.matrix().ncols() != space.basis().len() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients have {} columns, basis has {} states",
            coefficients.matrix().ncols(),
            space.basis().len()
        )));
    }
    let c = coefficients.matrix().view();
    Ok(TransitionTensors {
        one_body: space.one_body_tensor(&c),
        two_body: space.two_body_tensor(&c),
    })
}
