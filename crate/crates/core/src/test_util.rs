//! Shared fixtures for unit tests.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{build_grid, harmonic_potential, kinetic_operator, Grid};
use crate::linalg::symmetric_eig;

/// Small harmonic-trap grid for fast tests.
pub fn test_grid() -> Grid {
    build_grid(6.0, 96).unwrap()
}

/// Lowest `m` eigenfunctions of the harmonic trap as quadrature-normalized
/// grid functions (rows).
pub fn harmonic_orbitals(grid: &Grid, mass: f64, omega: f64, offset: f64, m: usize) -> Array2<C64> {
    let t = kinetic_operator(grid, mass).unwrap();
    let u = harmonic_potential(grid, offset, omega).unwrap();
    let h = t.add(&u).unwrap().to_dense();
    let (_, vecs) = symmetric_eig(&h.view()).unwrap();
    let scale = 1.0 / grid.spacing().sqrt();
    Array2::from_shape_fn((m, grid.len()), |(r, x)| C64::new(vecs[[x, r]] * scale, 0.0))
}

/// Random normalized top-layer coefficient matrix.
pub fn random_top(m_states: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::from_shape_fn((m_states, m_states), |_| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let norm: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    a.mapv_inplace(|z| z / norm);
    a
}

/// Random orbital set with orthonormal rows under the grid quadrature.
pub fn random_orbitals(grid: &Grid, m: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = Array2::from_shape_fn((m, grid.len()), |(_, x)| {
        // localized random smooth-ish functions, zero on the walls
        let xi = grid.point(x);
        let env = (-(xi * xi) / 4.0).exp();
        C64::new(rng.gen_range(-1.0..1.0) * env, rng.gen_range(-1.0..1.0) * env)
    });
    let g = grid.len();
    for r in 0..m {
        phi[[r, 0]] = C64::new(0.0, 0.0);
        phi[[r, g - 1]] = C64::new(0.0, 0.0);
    }
    crate::grid::orthonormalize_rows(grid, &mut phi).unwrap();
    phi
}
