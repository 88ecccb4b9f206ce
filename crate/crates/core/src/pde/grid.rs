use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest axis size accepted for a user-facing grid.
pub const MIN_POINTS: usize = 4;

/// A uniform periodic grid with `n` points per axis on `[0, 1)^dim`.
///
/// Points sit at `i·h` with `h = 1/n`; the periodic endpoint is not stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::GridTooSmall { n, min: MIN_POINTS });
        }
        Self::with_min(dim, n, MIN_POINTS)
    }

    fn with_min(dim: usize, n: usize, min: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::BadDimension(dim));
        }
        if n < min {
            return Err(Error::GridTooSmall { n, min });
        }
        Ok(Self { dim, n })
    }

    pub fn one_d(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn two_d(n: usize) -> Result<Self> {
        Self::new(2, n)
    }

    /// The grid with half the points per axis. Coarse multigrid levels may
    /// go down to two points per axis.
    pub fn coarsened(&self) -> Result<Self> {
        if self.n % 2 != 0 {
            return Err(Error::OddGrid(self.n));
        }
        Self::with_min(self.dim, self.n / 2, 2)
    }

    /// The grid with twice the points per axis.
    pub fn refined(&self) -> Self {
        Self { dim: self.dim, n: self.n * 2 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of points `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Point coordinates in storage order, `dim` values per point.
    /// 2D storage is row-major: index `i·n + j` has coordinates `(i·h, j·h)`.
    pub fn coordinates(&self) -> Vec<f64> {
        let h = self.h();
        match self.dim {
            1 => (0..self.n).map(|i| i as f64 * h).collect(),
            _ => {
                let mut out = Vec::with_capacity(2 * self.len());
                for i in 0..self.n {
                    for j in 0..self.n {
                        out.push(i as f64 * h);
                        out.push(j as f64 * h);
                    }
                }
                out
            }
        }
    }

    /// Signed wavenumber for DFT index `k` along one axis, in `(-n/2, n/2]`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if 2 * k > n {
            k - n
        } else {
            k
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dim {
            1 => write!(f, "1D n={}", self.n),
            _ => write!(f, "2D {}x{}", self.n, self.n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_times_n_is_one() {
        for n in [4, 5, 16, 64, 65, 33] {
            let g = GridSpec::one_d(n).unwrap();
            assert!((g.h() * n as f64 - 1.0).abs() < 1e-15);
            assert_eq!(GridSpec::two_d(n).unwrap().len(), n * n);
        }
    }

    #[test]
    fn rejects_small_and_bad_dims() {
        assert!(matches!(GridSpec::one_d(3), Err(Error::GridTooSmall { .. })));
        assert!(matches!(GridSpec::new(3, 8), Err(Error::BadDimension(3))));
        assert!(matches!(GridSpec::one_d(9).unwrap().coarsened(), Err(Error::OddGrid(9))));
        assert_eq!(GridSpec::one_d(4).unwrap().coarsened().unwrap().n(), 2);
    }

    #[test]
    fn wavenumbers_are_centered() {
        let g = GridSpec::one_d(8).unwrap();
        let ks: Vec<i64> = (0..8).map(|k| g.wavenumber(k)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        let g = GridSpec::one_d(5).unwrap();
        let ks: Vec<i64> = (0..5).map(|k| g.wavenumber(k)).collect();
        assert_eq!(ks, vec![0, 1, 2, -2, -1]);
    }
}
