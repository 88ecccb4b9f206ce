//! Uniform periodic grids, grid functions and constant-coefficient
//! finite-difference operators on the unit domain.

mod field;
mod grid;
pub mod io;
mod operator;
pub mod spectral;

pub use field::Field;
pub use grid::GridSpec;
pub use operator::{DiscreteOperator, EquationKind};
pub use spectral::{dft, idft, SpectralDecomposition};

/// Subtracts the mean from every entry.
pub fn project_zero_mean(v: &Field) -> Field {
    let mean = v.mean();
    v.map(|x| x - mean)
}
