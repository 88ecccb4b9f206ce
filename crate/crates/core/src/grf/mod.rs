//! Gaussian random fields with covariance `(−Δ + shift·I)^(−power)`,
//! sampled mode by mode in Fourier space, and paired solution datasets.

mod dataset;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::spectral::{conjugate_index, idft, wavenumbers};
use crate::pde::{Field, GridSpec};

pub use dataset::{
    dataset_from_bytes, dataset_to_bytes, generate_dataset, load_dataset, save_dataset, Dataset, Sample, DATASET_MAGIC,
    DATASET_VERSION,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub grid: GridSpec,
    pub shift: f64,
    pub power: f64,
    /// Drop the constant mode (needed for periodic Poisson data).
    pub zero_dc: bool,
    pub seed: u64,
}

impl GrfSpec {
    /// Covariance `(−Δ + 9I)^(−2)`.
    pub fn new(grid: GridSpec, zero_dc: bool, seed: u64) -> Self {
        Self { grid, shift: 9.0, power: 2.0, zero_dc, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shift > 0.0) {
            return Err(Error::InvalidParameter(format!("GRF shift {} must be > 0", self.shift)));
        }
        if !(self.power >= 1.0) {
            return Err(Error::InvalidParameter(format!("GRF power {} must be >= 1", self.power)));
        }
        Ok(())
    }

    /// `E|ĉ_k|² = (4π²‖k‖² + shift)^(−power)` for the mode stored at `idx`.
    pub fn mode_variance(&self, idx: usize) -> f64 {
        let [a, b] = wavenumbers(self.grid, idx);
        let k2 = (a * a + b * b) as f64;
        (4.0 * PI * PI * k2 + self.shift).powf(-self.power)
    }

    /// Generator for sample `index`: the seed picks the key, the index the
    /// ChaCha stream, so samples are independent and order-free.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Draws Hermitian-symmetric Fourier coefficients and returns the real
/// field given by the unitary inverse DFT.
///
/// Modes are visited in storage order. Each conjugate pair gets real and
/// imaginary parts with variance `σ²/2` each; self-conjugate modes (the
/// constant mode and Nyquist modes) are real with variance `σ²`.
pub fn sample_grf(spec: &GrfSpec, rng: &mut impl Rng) -> Result<Field> {
    spec.validate()?;
    let g = spec.grid;
    let mut modes = vec![Complex64::new(0.0, 0.0); g.len()];
    for idx in 0..g.len() {
        let partner = conjugate_index(g, idx);
        if partner < idx {
            continue;
        }
        let var = spec.mode_variance(idx);
        if partner == idx {
            let x: f64 = rng.sample(StandardNormal);
            modes[idx] = Complex64::new(x * var.sqrt(), 0.0);
        } else {
            let s = (var / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            modes[idx] = Complex64::new(re * s, im * s);
            modes[partner] = modes[idx].conj();
        }
    }
    if spec.zero_dc {
        modes[0] = Complex64::new(0.0, 0.0);
    }
    idft(g, &modes)
}

/// Sample number `index` of the stream defined by `spec.seed`.
pub fn sample_indexed(spec: &GrfSpec, index: u64) -> Result<Field> {
    sample_grf(spec, &mut spec.rng_for(index))
}
