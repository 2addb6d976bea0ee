//! Dense ladder-operator matrices built from first principles.
//!
//! These serve as a brute-force reference for the reduced transition
//! matrices: annihilation matrices are constructed directly from the action
//! of an operator string on ordered occupation states, and operator products
//! are plain matrix products. Nothing here shares code with the factorized
//! transition-matrix assembly.

use ndarray::{Array2, Array4, Array6, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, Statistics};

/// Matrix of a_q mapping the N-particle basis to the (N-1)-particle basis:
/// rows over `lower`, columns over `upper`.
pub fn annihilation(upper: &FockBasis, lower: &FockBasis, q: usize) -> Result<Array2<f64>> {
    if lower.particles() + 1 != upper.particles()
        || lower.orbitals() != upper.orbitals()
        || lower.statistics() != upper.statistics()
    {
        return Err(Error::DimensionMismatch(
            "lower basis must hold one particle less than upper".into(),
        ));
    }
    if q >= upper.orbitals() {
        return Err(Error::OrbitalIndex {
            index: q,
            count: upper.orbitals(),
        });
    }
    let mut a = Array2::<f64>::zeros((lower.len(), upper.len()));
    let mut scratch = vec![0u32; upper.orbitals()];
    for (col, n) in upper.states().enumerate() {
        if n[q] == 0 {
            continue;
        }
        scratch.clone_from_slice(n);
        scratch[q] -= 1;
        let row = lower
            .index_of(&scratch)
            .expect("lowered occupation must exist");
        let amp = match upper.statistics() {
            Statistics::Boson => (n[q] as f64).sqrt(),
            Statistics::Fermion => {
                // commute a_q past the creation operators of orbitals below q
                let crossings: u32 = n[..q].iter().sum();
                if crossings % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        a[[row, col]] = amp;
    }
    Ok(a)
}

fn sandwich(c: &ArrayView2<C64>, op: &Array2<f64>) -> Array2<C64> {
    // <psi_i| op |psi_j> = sum_{n n'} conj(c_in) op_{n n'} c_jn'
    let rows = c.nrows();
    let k = c.ncols();
    let mut out = Array2::<C64>::zeros((rows, rows));
    let mut opc = Array2::<C64>::zeros((k, rows));
    for n in 0..k {
        for j in 0..rows {
            let mut acc = C64::new(0.0, 0.0);
            for np in 0..k {
                if op[[n, np]] != 0.0 {
                    acc += c[[j, np]] * op[[n, np]];
                }
            }
            opc[[n, j]] = acc;
        }
    }
    for i in 0..rows {
        for j in 0..rows {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..k {
                acc += c[[i, n]].conj() * opc[[n, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Brute-force one-body transition tensor <psi_i| a+_k a_q |psi_j>.
pub fn dense_one_body(
    c: &ArrayView2<C64>,
    upper: &FockBasis,
    lower: &FockBasis,
) -> Result<Array4<C64>> {
    let m = upper.orbitals();
    let rows = c.nrows();
    let ann: Vec<Array2<f64>> = (0..m)
        .map(|q| annihilation(upper, lower, q))
        .collect::<Result<_>>()?;
    let mut d1 = Array4::<C64>::zeros((rows, rows, m, m));
    for k in 0..m {
        for q in 0..m {
            let op = ann[k].t().dot(&ann[q]);
            let block = sandwich(c, &op);
            for i in 0..rows {
                for j in 0..rows {
                    d1[[i, j, k, q]] = block[[i, j]];
                }
            }
        }
    }
    Ok(d1)
}

/// Brute-force two-body transition tensor <psi_i| a+_k a+_q a_qp a_kp |psi_j>.
pub fn dense_two_body(
    c: &ArrayView2<C64>,
    upper: &FockBasis,
    lower: &FockBasis,
    lower2: &FockBasis,
) -> Result<Array6<C64>> {
    let m = upper.orbitals();
    let rows = c.nrows();
    let ann_n: Vec<Array2<f64>> = (0..m)
        .map(|q| annihilation(upper, lower, q))
        .collect::<Result<_>>()?;
    let ann_n1: Vec<Array2<f64>> = (0..m)
        .map(|q| annihilation(lower, lower2, q))
        .collect::<Result<_>>()?;
    let mut d2 = Array6::<C64>::zeros((rows, rows, m, m, m, m));
    for k in 0..m {
        for q in 0..m {
            // a+_k a+_q acting to the left is a_q a_k on the bra side
            let raise = ann_n[k].t().dot(&ann_n1[q].t());
            for qp in 0..m {
                for kp in 0..m {
                    let lowerp = ann_n1[qp].dot(&ann_n[kp]);
                    let op = raise.dot(&lowerp);
                    let block = sandwich(c, &op);
                    for i in 0..rows {
                        for j in 0..rows {
                            d2[[i, j, k, q, qp, kp]] = block[[i, j]];
                        }
                    }
                }
            }
        }
    }
    Ok(d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::test_support::random_orthonormal_rows;
    use crate::fock::{enumerate_basis, transition_tensors, FockSpace, SpeciesCoefficients};

    #[test]
    fn anticommutator_is_identity() {
        let upper = enumerate_basis(Statistics::Fermion, 2, 4).unwrap();
        let lower = enumerate_basis(Statistics::Fermion, 1, 4).unwrap();
        for k in 0..4 {
            for q in 0..4 {
                let ak = annihilation(&upper, &lower, k).unwrap();
                let aq = annihilation(&upper, &lower, q).unwrap();
                // {a_k, a+_q} restricted to the N=2 sector needs the N=3 sector
                // too; check instead a+_k a_q + a_q a+_k on the one-particle
                // sector where both orderings stay within reach.
                let one = enumerate_basis(Statistics::Fermion, 1, 4).unwrap();
                let zero = enumerate_basis(Statistics::Fermion, 0, 4).unwrap();
                let bk = annihilation(&one, &zero, k).unwrap();
                let bq = annihilation(&one, &zero, q).unwrap();
                let anti = bk.t().dot(&bq) + ak.dot(&aq.t());
                for i in 0..anti.nrows() {
                    for j in 0..anti.ncols() {
                        let expect = if i == j && k == q { 1.0 } else if k == q { 0.0 } else { anti[[i, j]] };
                        if k == q {
                            assert!((anti[[i, j]] - expect).abs() < 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn transition_tensors_match_operator_strings() {
        for (stats, n, m, seed) in [
            (Statistics::Boson, 2u32, 3usize, 5u64),
            (Statistics::Boson, 3, 3, 6),
            (Statistics::Fermion, 2, 4, 7),
            (Statistics::Fermion, 3, 5, 8),
        ] {
            let space = FockSpace::new(stats, n, m).unwrap();
            let k = space.basis().len();
            let rows = 3.min(k);
            let c = random_orthonormal_rows(rows, k, seed);
            let coeffs = SpeciesCoefficients::new(c.clone()).unwrap();
            let t = transition_tensors(&coeffs, &space).unwrap();

            let d1 = dense_one_body(&c.view(), space.basis(), space.hole_basis()).unwrap();
            let mut max1: f64 = 0.0;
            for (a, b) in t.one_body.iter().zip(d1.iter()) {
                max1 = max1.max((a - b).norm());
            }
            assert!(max1 < 1e-12, "{stats:?} N={n} m={m}: d1 defect {max1:.3e}");

            let d2 = dense_two_body(
                &c.view(),
                space.basis(),
                space.hole_basis(),
                space.pair_hole_basis().unwrap(),
            )
            .unwrap();
            let mut max2: f64 = 0.0;
            for (a, b) in t.two_body.iter().zip(d2.iter()) {
                max2 = max2.max((a - b).norm());
            }
            assert!(max2 < 1e-12, "{stats:?} N={n} m={m}: d2 defect {max2:.3e}");
        }
    }
}
