use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} holds {count} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count = shape.iter().product();
        Self { shape, data: vec![0.0; count] }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(other.shape.clone())
    }

    /// Uniform entries in `[-bound, bound]`.
    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        let count = shape.iter().product();
        let data = (0..count).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }
}

/// Matrix strides `(row, col)` for [`gemm`].
pub(crate) type Strides = (isize, isize);

/// `C = A·B + beta·C` with `A` m×k, `B` k×n and `C` row-major m×n.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the slices cover the strided extents asserted by the callers;
    // `c` is exclusively borrowed and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0,
            sa.1,
            b.as_ptr(),
            sb.0,
            sb.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major strides of an r×c matrix and of its transpose.
pub(crate) fn rm(cols: usize) -> Strides {
    (cols as isize, 1)
}

pub(crate) fn tr(cols: usize) -> Strides {
    (1, cols as isize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checked() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(Tensor::new(vec![2, 3], vec![0.0; 5]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn gemm_against_naive() {
        let a: Vec<f64> = (0..6).map(|x| x as f64).collect(); // 2×3
        let b: Vec<f64> = (0..12).map(|x| (x as f64) * 0.5 - 2.0).collect(); // 3×4
        let mut c = vec![1.0; 8];
        gemm(2, 3, 4, &a, rm(3), &b, rm(4), 2.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], s + 2.0);
            }
        }
        // Transposed A: A is stored 3×2, used as 2×3.
        let at: Vec<f64> = (0..6).map(|x| x as f64).collect();
        let mut c2 = vec![0.0; 8];
        gemm(2, 3, 4, &at, tr(2), &b, rm(4), 0.0, &mut c2);
        for i in 0..2 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|p| at[p * 2 + i] * b[p * 4 + j]).sum();
                assert_eq!(c2[i * 4 + j], s);
            }
        }
    }
}
