//! Small dense linear-algebra helpers used throughout the crate.

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Conjugate transpose.
pub fn dagger(a: &ArrayView2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    for ((i, j), v) in a.indexed_iter() {
        out[[j, i]] = v.conj();
    }
    out
}

/// Largest absolute deviation from hermiticity, max_ij |a_ij - conj(a_ji)|.
pub fn hermiticity_defect(a: &ArrayView2<C64>) -> f64 {
    let mut defect: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..=i {
            defect = defect.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    defect
}

/// Eigendecomposition of a hermitian matrix, eigenvalues ascending,
/// eigenvectors as columns.
pub fn hermitian_eig(a: &ArrayView2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    // the backend diagonalizes the transposed (= conjugated) matrix when
    // handed a row-major buffer, so the eigenvectors come back conjugated
    let sym = a.as_standard_layout().into_owned();
    let (vals, vecs) = sym
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Backend(format!("eigh failed: {e}")))?;
    Ok((vals, vecs.mapv(|z| z.conj())))
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eig(a: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let sym = a.to_owned();
    sym.eigh(UPLO::Lower)
        .map_err(|e| Error::Backend(format!("eigh failed: {e}")))
}

/// Row Gram matrix S_ij = w * <row_i|row_j>.
pub fn row_gram(x: &ArrayView2<C64>, weight: f64) -> Array2<C64> {
    let xd = dagger(x);
    x.dot(&xd).mapv(|z| z * weight)
}

/// Largest deviation of the row Gram matrix from the identity.
pub fn row_gram_defect(x: &ArrayView2<C64>, weight: f64) -> f64 {
    let s = row_gram(x, weight);
    let mut defect: f64 = 0.0;
    for ((i, j), v) in s.indexed_iter() {
        let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        defect = defect.max((v - target).norm());
    }
    defect
}

/// Loewdin (symmetric) orthonormalization of the rows of `x` under the inner
/// product with quadrature weight `weight`: x <- S^{-1/2} x.
pub fn loewdin_rows(x: &mut Array2<C64>, weight: f64) -> Result<()> {
    let s = row_gram(&x.view(), weight);
    let (vals, vecs) = hermitian_eig(&s.view())?;
    let m = x.nrows();
    let mut inv_sqrt = Array2::<C64>::zeros((m, m));
    for k in 0..m {
        if vals[k] <= 0.0 {
            return Err(Error::Backend(format!(
                "loewdin: gram matrix not positive definite (eigenvalue {:.3e})",
                vals[k]
            )));
        }
        let w = C64::new(1.0 / vals[k].sqrt(), 0.0);
        for i in 0..m {
            for j in 0..m {
                inv_sqrt[[i, j]] += vecs[[i, k]] * w * vecs[[j, k]].conj();
            }
        }
    }
    let fixed = inv_sqrt.dot(x);
    x.assign(&fixed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dagger_conjugates_and_transposes() {
        let a = array![[C64::new(1.0, 2.0), C64::new(3.0, -1.0)]];
        let d = dagger(&a.view());
        assert_eq!(d.dim(), (2, 1));
        assert_eq!(d[[0, 0]], C64::new(1.0, -2.0));
        assert_eq!(d[[1, 0]], C64::new(3.0, 1.0));
    }

    #[test]
    fn loewdin_restores_orthonormality() {
        let mut x = array![
            [C64::new(1.0, 0.0), C64::new(0.1, 0.05), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.1), C64::new(1.0, 0.0), C64::new(0.02, 0.0)],
        ];
        loewdin_rows(&mut x, 1.0).unwrap();
        assert!(row_gram_defect(&x.view(), 1.0) < 1e-12);
    }

    #[test]
    fn hermitian_eig_orders_ascending() {
        let a = array![
            [C64::new(2.0, 0.0), C64::new(0.0, 1.0)],
            [C64::new(0.0, -1.0), C64::new(2.0, 0.0)]
        ];
        let (vals, vecs) = hermitian_eig(&a.view()).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // residual check A v = lambda v
        for k in 0..2 {
            for i in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..2 {
                    acc += a[[i, j]] * vecs[[j, k]];
                }
                assert!((acc - vecs[[i, k]] * vals[k]).norm() < 1e-12);
            }
        }
    }
}
