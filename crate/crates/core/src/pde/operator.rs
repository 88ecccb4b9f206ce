use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Field, GridSpec};

/// Which PDE is discretized. Helmholtz uses the sign convention
/// `-Δu - a²u = f` with a constant, non-negative shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EquationKind {
    Poisson,
    Helmholtz { a2: f64 },
}

impl EquationKind {
    pub fn shift(&self) -> f64 {
        match *self {
            EquationKind::Poisson => 0.0,
            EquationKind::Helmholtz { a2 } => a2,
        }
    }

    /// The periodic operator is singular (constant null space) exactly when
    /// there is no shift.
    pub fn is_singular(&self) -> bool {
        self.shift() == 0.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquationKind::Poisson => "poisson",
            EquationKind::Helmholtz { .. } => "helmholtz",
        }
    }
}

/// Second-order central-difference `-Δ_h - a²I` with periodic wraparound.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator {
    grid: GridSpec,
    kind: EquationKind,
    center: f64,
    neighbor: f64,
    singular: bool,
}

impl DiscreteOperator {
    pub fn new(grid: GridSpec, kind: EquationKind) -> Result<Self> {
        Self::build(grid, kind)
    }

    /// Same as [`DiscreteOperator::new`] but accepts coarse multigrid grids.
    pub(crate) fn build(grid: GridSpec, kind: EquationKind) -> Result<Self> {
        let a2 = kind.shift();
        if !(a2 >= 0.0) || !a2.is_finite() {
            return Err(Error::InvalidParameter(format!("Helmholtz shift a^2 = {a2} must be >= 0")));
        }
        let h2 = grid.h() * grid.h();
        let op =
            Self { grid, kind, center: 2.0 * grid.dim() as f64 / h2 - a2, neighbor: -1.0 / h2, singular: a2 == 0.0 };
        if a2 > 0.0 {
            for lap in op.laplacian_eigenvalues() {
                if (lap - a2).abs() < 1e-12 {
                    return Err(Error::ResonantShift { a2, eigenvalue: lap });
                }
            }
        }
        Ok(op)
    }

    /// Decoupled operator `diag·I` with no neighbour terms. Used to exercise
    /// solvers that should become exact when the stencil is diagonal; `kind`
    /// reports the Helmholtz shift that yields the same diagonal.
    pub fn diagonal_only(grid: GridSpec, diag: f64) -> Result<Self> {
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::ZeroDiagonal(diag));
        }
        let h2 = grid.h() * grid.h();
        Ok(Self {
            grid,
            kind: EquationKind::Helmholtz { a2: 2.0 * grid.dim() as f64 / h2 - diag },
            center: diag,
            neighbor: 0.0,
            singular: false,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    /// True when constants lie in the null space (periodic Poisson).
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Diagonal entry `2d/h² - a²`.
    pub fn diagonal(&self) -> f64 {
        self.center
    }

    /// Off-diagonal entry `-1/h²` for each axis neighbour.
    pub fn neighbor_coefficient(&self) -> f64 {
        self.neighbor
    }

    /// The same PDE on the grid with half the points per axis.
    pub fn coarsened(&self) -> Result<Self> {
        Self::build(self.grid.coarsened()?, self.kind)
    }

    /// Eigenvalues of `-Δ_h` in DFT storage order.
    fn laplacian_eigenvalues(&self) -> Vec<f64> {
        let n = self.grid.n();
        let h2 = self.grid.h() * self.grid.h();
        let axis: Vec<f64> = (0..n).map(|k| (2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos()) / h2).collect();
        match self.grid.dim() {
            1 => axis,
            _ => {
                let mut out = Vec::with_capacity(n * n);
                for a in &axis {
                    for b in &axis {
                        out.push(a + b);
                    }
                }
                out
            }
        }
    }

    /// Eigenvalues of the full operator in DFT storage order:
    /// `center + neighbor·Σ_axis 2cos(2πk/n)`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.grid.n();
        let axis: Vec<f64> = (0..n).map(|k| 2.0 * (2.0 * PI * k as f64 / n as f64).cos()).collect();
        match self.grid.dim() {
            1 => axis.iter().map(|c| self.center + self.neighbor * c).collect(),
            _ => {
                let mut out = Vec::with_capacity(n * n);
                for a in &axis {
                    for b in &axis {
                        out.push(self.center + self.neighbor * (a + b));
                    }
                }
                out
            }
        }
    }

    /// Storage indices of the `2·dim` stencil neighbours of `idx`
    /// (left/right along each axis, duplicates kept for `n = 2`).
    pub(crate) fn neighbors(&self, idx: usize) -> ([usize; 4], usize) {
        let n = self.grid.n();
        match self.grid.dim() {
            1 => ([(idx + n - 1) % n, (idx + 1) % n, 0, 0], 2),
            _ => {
                let (i, j) = (idx / n, idx % n);
                ([((i + n - 1) % n) * n + j, ((i + 1) % n) * n + j, i * n + (j + n - 1) % n, i * n + (j + 1) % n], 4)
            }
        }
    }

    /// `L v` by stencil application.
    pub fn apply(&self, v: &Field) -> Result<Field> {
        v.check_grid(self.grid)?;
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &Field) -> Field {
        let x = v.values();
        let n = self.grid.n();
        let mut out = vec![0.0; x.len()];
        match self.grid.dim() {
            1 => {
                for i in 0..n {
                    let l = x[(i + n - 1) % n];
                    let r = x[(i + 1) % n];
                    out[i] = self.center * x[i] + self.neighbor * (l + r);
                }
            }
            _ => {
                for i in 0..n {
                    let up = ((i + n - 1) % n) * n;
                    let down = ((i + 1) % n) * n;
                    let row = i * n;
                    for j in 0..n {
                        let jl = (j + n - 1) % n;
                        let jr = (j + 1) % n;
                        let s = x[up + j] + x[down + j] + x[row + jl] + x[row + jr];
                        out[row + j] = self.center * x[row + j] + self.neighbor * s;
                    }
                }
            }
        }
        Field::from_raw(self.grid, out)
    }

    /// `f - L u`
    pub fn residual(&self, u: &Field, f: &Field) -> Result<Field> {
        u.check_grid(self.grid)?;
        f.check_grid(self.grid)?;
        Ok(self.residual_unchecked(u, f))
    }

    pub(crate) fn residual_unchecked(&self, u: &Field, f: &Field) -> Field {
        let lu = self.apply_unchecked(u);
        f.sub(&lu)
    }

    /// Explicitly assembled dense matrix (tests and theory utilities).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let len = self.grid.len();
        let mut m = DMatrix::zeros(len, len);
        for idx in 0..len {
            m[(idx, idx)] += self.center;
            let (nb, count) = self.neighbors(idx);
            for &j in &nb[..count] {
                m[(idx, j)] += self.neighbor;
            }
        }
        m
    }
}
