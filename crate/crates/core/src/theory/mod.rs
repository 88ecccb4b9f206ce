//! Numerical checks of the greedy approximation theory: exhaustive search
//! for optimal solver sequences, contraction constants, the greedy bound,
//! the DFT-diagonal value formula, supermodularity and the router loss
//! identities.

mod checks;
mod spectral;
mod suite;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::{DiscreteOperator, Field};
use crate::routing::{greedy_select, step_costs, Ensemble};
use crate::solvers::{error_propagation_matrix, SolverHandle};

pub use checks::{
    postfix_monotonicity_check, routing_loss_identity_holds, supermodularity_check, surrogate_bound_holds, CheckReport,
};
pub use spectral::spectral_value;
pub use suite::{verify_theory, TheorySuite};

/// Largest exhaustive search accepted by [`brute_force_optimal`].
pub const MAX_SEARCH: u128 = 1_000_000;

/// A solver sequence and its final squared error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceValue {
    pub sequence: Vec<usize>,
    pub value: f64,
}

/// `‖(I − C_{S_T} L) ⋯ (I − C_{S_1} L) e0‖²`, applying `S_1` first and
/// measuring in the solvable subspace.
pub fn sequence_value(ens: &Ensemble, seq: &[usize], e0: &Field) -> Result<f64> {
    let mut e = ens.measure(e0);
    for &id in seq {
        e = ens.propagate(id, &e)?;
    }
    Ok(e.norm_sq())
}

/// Greedy sequence of length `steps`: each step takes the solver with the
/// smallest next error.
pub fn greedy_sequence(ens: &Ensemble, e0: &Field, steps: usize) -> Result<SequenceValue> {
    let mut e = ens.measure(e0);
    let mut sequence = Vec::with_capacity(steps);
    for _ in 0..steps {
        let id = greedy_select(&step_costs(ens, &e)?)?;
        e = ens.propagate(id, &e)?;
        sequence.push(id);
    }
    Ok(SequenceValue { sequence, value: e.norm_sq() })
}

/// Exact minimizer over all `K^T` sequences of length `steps`. Ties go to
/// the lexicographically smallest sequence.
pub fn brute_force_optimal(ens: &Ensemble, e0: &Field, steps: usize) -> Result<SequenceValue> {
    let k = ens.len() as u128;
    let total = (0..steps).try_fold(1u128, |acc, _| acc.checked_mul(k)).unwrap_or(u128::MAX);
    if total > MAX_SEARCH {
        return Err(Error::SearchTooLarge(total));
    }
    let mut best = SequenceValue { sequence: Vec::new(), value: f64::INFINITY };
    let mut prefix = Vec::with_capacity(steps);
    search(ens, &ens.measure(e0), steps, &mut prefix, &mut best)?;
    Ok(best)
}

fn search(
    ens: &Ensemble,
    e: &Field,
    remaining: usize,
    prefix: &mut Vec<usize>,
    best: &mut SequenceValue,
) -> Result<()> {
    if remaining == 0 {
        let v = e.norm_sq();
        if v < best.value {
            best.value = v;
            best.sequence = prefix.clone();
        }
        return Ok(());
    }
    for id in 1..=ens.len() {
        let next = ens.propagate(id, e)?;
        prefix.push(id);
        search(ens, &next, remaining - 1, prefix, best)?;
        prefix.pop();
    }
    Ok(())
}

/// Dense `I − C L`, restricted to zero-mean vectors when `L` is singular.
pub(crate) fn measured_matrix(handle: &SolverHandle, op: &DiscreteOperator) -> Result<DMatrix<f64>> {
    let m = error_propagation_matrix(handle, op)?;
    if !op.is_singular() {
        return Ok(m);
    }
    let n = m.nrows();
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
    Ok(&p * m * &p)
}

const POWER_MAX_ITERS: usize = 1_000_000;
const POWER_TOL: f64 = 1e-10;

/// Spectral norm of the measured error-propagation map of one solver,
/// from power iteration on `MᵀM`.
pub fn lipschitz_constant(handle: &SolverHandle, op: &DiscreteOperator) -> Result<f64> {
    let m = measured_matrix(handle, op)?;
    let mtm = m.transpose() * &m;
    let n = mtm.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x11f5);
    let mut v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    if op.is_singular() {
        let mean = v.mean();
        v.add_scalar_mut(-mean);
    }
    v /= v.norm();
    for _ in 0..POWER_MAX_ITERS {
        let w = &mtm * &v;
        let lambda = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        if (&w - &v * lambda).norm() <= POWER_TOL * lambda.abs() {
            return Ok(lambda.max(0.0).sqrt());
        }
        v = w / wn;
    }
    Err(Error::NoConvergence(POWER_MAX_ITERS))
}

/// Supermodularity ratio `max{4 / (T − Σ ρ_i²), 1}` of a sequence whose
/// solvers have contraction constants `rhos` (one per step).
pub fn alpha_of(rhos: &[f64], steps: usize) -> Result<f64> {
    if rhos.len() != steps {
        return Err(Error::LengthMismatch { expected: steps, got: rhos.len() });
    }
    if let Some(r) = rhos.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidParameter(format!("contraction constant {r} is not a finite non-negative value")));
    }
    let sum_sq: f64 = rhos.iter().map(|r| r * r).sum();
    let denom = steps as f64 - sum_sq;
    if !(denom > 0.0) {
        return Err(Error::DegenerateDenominator { sum_sq, t: steps });
    }
    Ok((4.0 / denom).max(1.0))
}

/// `(1 − 1/(αT))^T`
pub fn phi(alpha: f64, steps: usize) -> f64 {
    (1.0 - 1.0 / (alpha * steps as f64)).powi(steps as i32)
}

/// Greedy, optimal and initial values with the resulting approximation
/// bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub greedy: SequenceValue,
    pub optimal: SequenceValue,
    pub empty: f64,
    /// Infinite when every solver of the optimal sequence is only
    /// non-expansive (`Σ ρ² = T`).
    pub alpha: f64,
    pub phi: f64,
    /// `(1 − φ) h(O) + φ h(∅)`
    pub bound: f64,
    pub satisfied: bool,
}

impl BoundReport {
    /// `bound − h(greedy)`; negative when violated.
    pub fn slack(&self) -> f64 {
        self.bound - self.greedy.value
    }
}

/// Contraction constant of every solver in ensemble order.
pub fn ensemble_lipschitz(ens: &Ensemble) -> Result<Vec<f64>> {
    ens.solvers().iter().map(|h| lipschitz_constant(h, ens.operator())).collect()
}

/// Compares the greedy sequence against the exhaustive optimum and the
/// bound implied by the optimal sequence's contraction constants.
///
/// When the optimal sequence uses only maps of norm one the ratio is
/// unbounded; the bound then takes its limit `h(∅)`.
pub fn greedy_bound_check(ens: &Ensemble, e0: &Field, steps: usize) -> Result<BoundReport> {
    let rhos = ensemble_lipschitz(ens)?;
    greedy_bound_check_with(ens, e0, steps, &rhos)
}

/// [`greedy_bound_check`] with precomputed contraction constants.
pub fn greedy_bound_check_with(ens: &Ensemble, e0: &Field, steps: usize, rhos: &[f64]) -> Result<BoundReport> {
    if steps == 0 {
        return Err(Error::InvalidParameter("the bound needs at least one step".into()));
    }
    if rhos.len() != ens.len() {
        return Err(Error::LengthMismatch { expected: ens.len(), got: rhos.len() });
    }
    let optimal = brute_force_optimal(ens, e0, steps)?;
    let greedy = greedy_sequence(ens, e0, steps)?;
    let empty = sequence_value(ens, &[], e0)?;
    let opt_rhos: Vec<f64> = optimal.sequence.iter().map(|&id| rhos[id - 1]).collect();
    let alpha = match alpha_of(&opt_rhos, steps) {
        Err(Error::DegenerateDenominator { .. }) => f64::INFINITY,
        other => other?,
    };
    let phi = if alpha.is_infinite() { 1.0 } else { phi(alpha, steps) };
    let bound = (1.0 - phi) * optimal.value + phi * empty;
    let satisfied = greedy.value <= bound + 1e-12;
    Ok(BoundReport { greedy, optimal, empty, alpha, phi, bound, satisfied })
}

#[cfg(test)]
mod tests;
