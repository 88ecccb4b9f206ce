//! Run summaries: final errors, AUCs, residual metrics, Fourier mode-wise
//! errors and mean ± standard error aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::spectral::wavenumbers;
use crate::pde::{dft, Field};
use crate::routing::RouteTrace;

/// Error magnitude in Fourier shell `m`. In 1D this combines the `±m`
/// pair; in 2D it collects all modes with `max(|k₁|, |k₂|) = m`.
pub fn mode_error(e: &Field, m: usize) -> Result<f64> {
    let g = e.grid();
    if 2 * m >= g.n() {
        return Err(Error::BadMode { mode: m, n: g.n() });
    }
    let modes = dft(e);
    let mut energy = 0.0;
    for (idx, c) in modes.iter().enumerate() {
        let [a, b] = wavenumbers(g, idx);
        if a.unsigned_abs().max(b.unsigned_abs()) as usize == m {
            energy += c.norm_sqr();
        }
    }
    Ok(energy.sqrt())
}

/// `Σ_{t=1..T} ‖e_t‖` from a per-step norm series that starts at `t = 0`.
pub fn auc(norms: &[f64]) -> f64 {
    norms.iter().skip(1).sum()
}

/// `Σ_{t=1..T} ‖e_t‖²`
pub fn auc_squared(norms: &[f64]) -> f64 {
    norms.iter().skip(1).map(|x| x * x).sum()
}

/// Summary numbers for one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub final_error: f64,
    pub error_auc: f64,
    pub error_auc_squared: f64,
    pub final_residual: f64,
    pub residual_auc_squared: f64,
}

impl RunMetrics {
    pub fn of(trace: &RouteTrace) -> Self {
        let (final_residual, residual_auc_squared) = residual_metrics(trace);
        Self {
            final_error: *trace.errors.last().unwrap(),
            error_auc: auc(&trace.errors),
            error_auc_squared: auc_squared(&trace.errors),
            final_residual,
            residual_auc_squared,
        }
    }
}

/// Final residual norm and `Σ_{t=1..T} ‖r_t‖²`.
pub fn residual_metrics(trace: &RouteTrace) -> (f64, f64) {
    (*trace.residuals.last().unwrap(), auc_squared(&trace.residuals))
}

/// Sample mean and standard error of the mean (`s/√n`, zero for `n < 2`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
