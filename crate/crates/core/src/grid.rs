//! Uniform spatial grid, one-body operators and two-body interaction kernels
//! in harmonic-oscillator units (hbar = 1).
//!
//! The kinetic operator is a sine DVR for a hard-wall box [-L, L]: the first
//! and last grid points sit on the walls and carry identically vanishing
//! wave-function values, the interior points form the standard sine-DVR mesh
//! with spacing 2L/(G-1). The second-derivative action is spectrally exact on
//! the sine modes of the box.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Uniform symmetric grid on [-L, L], wall points included.
#[derive(Debug, Clone)]
pub struct Grid {
    half_width: f64,
    points: Array1<f64>,
    spacing: f64,
}

impl Grid {
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Number of grid points G.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> ArrayView1<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Quadrature inner product <f|g> = dx * sum_i conj(f_i) g_i.
    pub fn inner_product(&self, f: &ArrayView1<C64>, g: &ArrayView1<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in f.iter().zip(g.iter()) {
            acc += a.conj() * b;
        }
        acc * self.spacing
    }

    pub fn norm(&self, f: &ArrayView1<C64>) -> f64 {
        self.inner_product(f, f).re.max(0.0).sqrt()
    }
}

/// Build a uniform grid of `count` points spanning [-half_width, half_width].
pub fn build_grid(half_width: f64, count: usize) -> Result<Grid> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "half width must be positive and finite, got {half_width}"
        )));
    }
    if count < 8 {
        return Err(Error::InvalidGrid(format!(
            "at least 8 points required, got {count}"
        )));
    }
    let spacing = 2.0 * half_width / (count - 1) as f64;
    let points = Array1::from_shape_fn(count, |i| -half_width + spacing * i as f64);
    Ok(Grid {
        half_width,
        points,
        spacing,
    })
}

/// One-body operator on the grid.
///
/// Kinetic terms are dense real-symmetric matrices, local potentials are
/// diagonal. `Composite` keeps the split so that application stays cheap.
#[derive(Debug, Clone)]
pub enum OneBodyOperator {
    Kinetic(Array2<f64>),
    Potential(Array1<f64>),
    Composite {
        kinetic: Array2<f64>,
        potential: Array1<f64>,
    },
}

impl OneBodyOperator {
    pub fn grid_len(&self) -> usize {
        match self {
            OneBodyOperator::Kinetic(t) => t.nrows(),
            OneBodyOperator::Potential(u) => u.len(),
            OneBodyOperator::Composite { kinetic, .. } => kinetic.nrows(),
        }
    }

    /// Sum of two operators acting on the same grid.
    pub fn add(&self, other: &OneBodyOperator) -> Result<OneBodyOperator> {
        if self.grid_len() != other.grid_len() {
            return Err(Error::DimensionMismatch(format!(
                "operator sizes {} and {}",
                self.grid_len(),
                other.grid_len()
            )));
        }
        use OneBodyOperator::*;
        Ok(match (self, other) {
            (Kinetic(t), Potential(u)) | (Potential(u), Kinetic(t)) => Composite {
                kinetic: t.clone(),
                potential: u.clone(),
            },
            (Potential(u), Potential(v)) => Potential(u + v),
            (Kinetic(t), Kinetic(s)) => Kinetic(t + s),
            (Composite { kinetic, potential }, Potential(u))
            | (Potential(u), Composite { kinetic, potential }) => Composite {
                kinetic: kinetic.clone(),
                potential: potential + u,
            },
            (Composite { kinetic, potential }, Kinetic(t))
            | (Kinetic(t), Composite { kinetic, potential }) => Composite {
                kinetic: kinetic + t,
                potential: potential.clone(),
            },
            (
                Composite { kinetic, potential },
                Composite {
                    kinetic: k2,
                    potential: p2,
                },
            ) => Composite {
                kinetic: kinetic + k2,
                potential: potential + p2,
            },
        })
    }

    /// Apply the operator to a set of functions stored as rows of `f`.
    pub fn apply(&self, f: &ArrayView2<C64>) -> Array2<C64> {
        let (rows, g) = f.dim();
        let mut out = Array2::<C64>::zeros((rows, g));
        if let Some(t) = self.kinetic_matrix() {
            // complex * real-symmetric product via split real GEMMs
            let re = f.mapv(|z| z.re);
            let im = f.mapv(|z| z.im);
            let ore = re.dot(t);
            let oim = im.dot(t);
            for r in 0..rows {
                for x in 0..g {
                    out[[r, x]] = C64::new(ore[[r, x]], oim[[r, x]]);
                }
            }
        }
        if let Some(u) = self.potential_diagonal() {
            for r in 0..rows {
                for x in 0..g {
                    out[[r, x]] += f[[r, x]] * u[x];
                }
            }
        }
        out
    }

    pub fn apply_vec(&self, f: &ArrayView1<C64>) -> Array1<C64> {
        let two = f.view().insert_axis(Axis(0));
        self.apply(&two).index_axis_move(Axis(0), 0)
    }

    pub fn kinetic_matrix(&self) -> Option<&Array2<f64>> {
        match self {
            OneBodyOperator::Kinetic(t) => Some(t),
            OneBodyOperator::Composite { kinetic, .. } => Some(kinetic),
            OneBodyOperator::Potential(_) => None,
        }
    }

    pub fn potential_diagonal(&self) -> Option<&Array1<f64>> {
        match self {
            OneBodyOperator::Potential(u) => Some(u),
            OneBodyOperator::Composite { potential, .. } => Some(potential),
            OneBodyOperator::Kinetic(_) => None,
        }
    }

    /// Dense matrix representation.
    pub fn to_dense(&self) -> Array2<f64> {
        let g = self.grid_len();
        let mut out = Array2::<f64>::zeros((g, g));
        if let Some(t) = self.kinetic_matrix() {
            out += t;
        }
        if let Some(u) = self.potential_diagonal() {
            for i in 0..g {
                out[[i, i]] += u[i];
            }
        }
        out
    }

    /// max_ij |T_ij - T_ji| of the dense representation.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.to_dense();
        let mut defect: f64 = 0.0;
        for i in 0..d.nrows() {
            for j in 0..i {
                defect = defect.max((d[[i, j]] - d[[j, i]]).abs());
            }
        }
        defect
    }

    /// <f| op |g> under the grid quadrature.
    pub fn matrix_element(&self, grid: &Grid, f: &ArrayView1<C64>, g: &ArrayView1<C64>) -> C64 {
        let og = self.apply_vec(g);
        grid.inner_product(f, &og.view())
    }
}

/// Sine-DVR kinetic operator -(1/2M) d^2/dx^2 for the hard-wall box [-L, L].
///
/// Constructed spectrally: T = S diag(eps_k) S^T over the interior points with
/// S the discrete sine transform of the box and eps_k = (k pi / 2L)^2 / 2M.
/// The wall rows and columns are identically zero.
pub fn kinetic_operator(grid: &Grid, mass: f64) -> Result<OneBodyOperator> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "mass must be positive and finite, got {mass}"
        )));
    }
    let g = grid.len();
    let n = g - 2; // interior points
    let width = 2.0 * grid.half_width();
    let norm = (2.0 / (g - 1) as f64).sqrt();
    let mut s = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            let arg = std::f64::consts::PI * ((j + 1) * (k + 1)) as f64 / (g - 1) as f64;
            s[[j, k]] = norm * arg.sin();
        }
    }
    let eps = Array1::from_shape_fn(n, |k| {
        let kappa = (k + 1) as f64 * std::f64::consts::PI / width;
        kappa * kappa / (2.0 * mass)
    });
    let sd = &s * &eps; // scales columns: (S diag(eps))_jk = S_jk eps_k
    let mut interior = sd.dot(&s.t());
    // enforce exact symmetry against rounding in the products
    for i in 0..n {
        for j in 0..i {
            let sym = 0.5 * (interior[[i, j]] + interior[[j, i]]);
            interior[[i, j]] = sym;
            interior[[j, i]] = sym;
        }
    }
    let mut t = Array2::<f64>::zeros((g, g));
    t.slice_mut(ndarray::s![1..g - 1, 1..g - 1]).assign(&interior);
    Ok(OneBodyOperator::Kinetic(t))
}

/// Harmonic trap potential, diagonal entries w^2 (x - x0)^2 / 2.
pub fn harmonic_potential(grid: &Grid, offset: f64, frequency: f64) -> Result<OneBodyOperator> {
    if !offset.is_finite() || !frequency.is_finite() {
        return Err(Error::InvalidGrid(
            "offset and frequency must be finite".into(),
        ));
    }
    let u = grid
        .points()
        .mapv(|x| 0.5 * frequency * frequency * (x - offset) * (x - offset));
    Ok(OneBodyOperator::Potential(u))
}

/// Two-body interaction kernel between particles on the grid.
///
/// The contact kernel acts diagonally with weight g/dx, the grid
/// representation of g delta(x - x'). A tabulated kernel holds the symmetric
/// matrix w(x_i, x_j) directly.
#[derive(Debug, Clone)]
pub enum InteractionKernel {
    Contact { strength: f64 },
    Tabulated { table: Array2<f64> },
}

impl InteractionKernel {
    pub fn contact(strength: f64) -> Self {
        InteractionKernel::Contact { strength }
    }

    pub fn tabulated(table: Array2<f64>) -> Result<Self> {
        if table.nrows() != table.ncols() {
            return Err(Error::DimensionMismatch(
                "kernel table must be square".into(),
            ));
        }
        let mut defect: f64 = 0.0;
        for i in 0..table.nrows() {
            for j in 0..i {
                defect = defect.max((table[[i, j]] - table[[j, i]]).abs());
            }
        }
        if defect > 1e-12 {
            return Err(Error::NotHermitian {
                defect,
                tol: 1e-12,
            });
        }
        Ok(InteractionKernel::Tabulated { table })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            InteractionKernel::Contact { strength } => *strength == 0.0,
            InteractionKernel::Tabulated { table } => table.iter().all(|v| *v == 0.0),
        }
    }

    /// Kernel value w(x_i, x_j) in grid representation.
    pub fn value(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        match self {
            InteractionKernel::Contact { strength } => {
                if i == j {
                    strength / grid.spacing()
                } else {
                    0.0
                }
            }
            InteractionKernel::Tabulated { table } => table[[i, j]],
        }
    }
}

/// Orthonormalize functions (rows) under the grid quadrature.
pub fn orthonormalize_rows(grid: &Grid, f: &mut Array2<C64>) -> Result<()> {
    crate::linalg::loewdin_rows(f, grid.spacing())
}
