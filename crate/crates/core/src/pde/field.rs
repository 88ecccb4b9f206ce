use crate::error::{Error, Result};

use super::GridSpec;

/// A real-valued grid function.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    /// Builds a field, checking the length and that every entry is finite.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness check. Iterates of a diverging
    /// hybrid run pass through here before being inspected.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    /// Samples `g` at every grid point; `g` receives the point coordinates.
    pub fn from_fn(grid: GridSpec, g: impl Fn(&[f64]) -> f64) -> Self {
        let coords = grid.coordinates();
        let values = coords.chunks(grid.dim()).map(g).collect();
        Self { grid, values }
    }

    /// Unit vector at `index`.
    pub fn basis(grid: GridSpec, index: usize) -> Self {
        let mut f = Self::zeros(grid);
        f.values[index] = 1.0;
        f
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Euclidean norm over grid points (no `h` weighting).
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| g(v)).collect() }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self += alpha · x`
    pub fn axpy(&mut self, alpha: f64, x: &Field) {
        for (a, b) in self.values.iter_mut().zip(&x.values) {
            *a += alpha * b;
        }
    }

    fn zip_with(&self, other: &Field, g: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| g(a, b)).collect();
        Field { grid: self.grid, values }
    }

    pub(crate) fn check_grid(&self, grid: GridSpec) -> Result<()> {
        if self.grid != grid {
            return Err(Error::GridMismatch { expected: grid.to_string(), got: self.grid.to_string() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_values() {
        let g = GridSpec::one_d(4).unwrap();
        assert!(matches!(Field::new(g, vec![0.0; 3]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(Field::new(g, vec![0.0, f64::NAN, 0.0, 0.0]), Err(Error::NonFinite(1))));
    }

    #[test]
    fn from_fn_uses_row_major_coordinates() {
        let g = GridSpec::two_d(4).unwrap();
        let f = Field::from_fn(g, |x| 10.0 * x[0] + x[1]);
        assert_eq!(f.values()[1], 0.25);
        assert_eq!(f.values()[4], 2.5);
    }
}
