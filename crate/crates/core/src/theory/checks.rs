use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::Field;
use crate::routing::{argmax, surrogate_loss, CostVector, Ensemble};
use crate::solvers::{error_propagation_matrix, SolverKind};

use super::ensemble_lipschitz;

const SLACK: f64 = 1e-12;
const LOSS_SLACK: f64 = 1e-10;

/// Outcome of an enumerated inequality check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// Whether the hypotheses under which the inequality is expected to
    /// hold were verified for this ensemble.
    pub premises: bool,
    pub trials: usize,
    pub violations: usize,
    /// Smallest observed `rhs − lhs`; negative values are violations.
    pub worst_slack: f64,
    pub first_violation: Option<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, premises: bool) -> Self {
        Self {
            name: name.into(),
            premises,
            trials: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            first_violation: None,
        }
    }

    /// Records one trial; `describe` is only called for the first violation.
    pub fn record(&mut self, slack: f64, describe: impl FnOnce() -> String) {
        self.trials += 1;
        self.worst_slack = self.worst_slack.min(slack);
        if slack < -SLACK {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(describe());
            }
        }
    }

    /// Combines trial counts of reports with the same name.
    pub fn merge(&mut self, other: &CheckReport) {
        self.premises &= other.premises;
        self.trials += other.trials;
        self.violations += other.violations;
        self.worst_slack = self.worst_slack.min(other.worst_slack);
        if self.first_violation.is_none() {
            self.first_violation.clone_from(&other.first_violation);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Sequence values with shared prefixes evaluated once.
struct ValueCache<'a> {
    ens: &'a Ensemble,
    fields: HashMap<Vec<usize>, Field>,
}

impl<'a> ValueCache<'a> {
    fn new(ens: &'a Ensemble, e0: &Field) -> Self {
        let mut fields = HashMap::new();
        fields.insert(Vec::new(), ens.measure(e0));
        Self { ens, fields }
    }

    fn field(&mut self, seq: &[usize]) -> Result<Field> {
        if let Some(f) = self.fields.get(seq) {
            return Ok(f.clone());
        }
        let (last, prefix) = seq.split_last().unwrap();
        let prev = self.field(prefix)?;
        let next = self.ens.propagate(*last, &prev)?;
        self.fields.insert(seq.to_vec(), next.clone());
        Ok(next)
    }

    fn value(&mut self, seq: &[usize]) -> Result<f64> {
        Ok(self.field(seq)?.norm_sq())
    }
}

/// Every sequence over `1..=k` of length `len`, in lexicographic order.
fn sequences(k: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (1..=k).map(move |id| {
                    let mut t = s.clone();
                    t.push(id);
                    t
                })
            })
            .collect();
    }
    out
}

fn cat(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().chain(b).copied().collect()
}

/// Exhaustive check of diminishing returns,
/// `h(S) − h(S⊕ω) ≥ h(S') − h(S'⊕ω)` for every prefix `S ⪯ S'`, `|S'| ≤ T`
/// and solver `ω`, and of the unit-ratio inequality
/// `h(S) − h(S⊕S') ≤ Σ_i h(S) − h(S⊕S'_i)` for `|S| = |S'| ≤ T`.
///
/// Premises hold when every member is weighted Jacobi (all maps share the
/// Fourier eigenbasis) and no map expands the error.
pub fn supermodularity_check(ens: &Ensemble, e0: &Field, steps: usize) -> Result<Vec<CheckReport>> {
    let commuting = ens.solvers().iter().all(|h| matches!(h.kind, SolverKind::WeightedJacobi { .. }));
    let premises = commuting && ensemble_lipschitz(ens)?.iter().all(|r| *r <= 1.0 + 1e-12);
    let k = ens.len();
    let mut cache = ValueCache::new(ens, e0);
    let mut diminishing = CheckReport::new("diminishing_returns", premises);
    for len in 0..=steps {
        for long in sequences(k, len) {
            for cut in 0..=len {
                let short = &long[..cut];
                for w in 1..=k {
                    let gain_short = cache.value(short)? - cache.value(&cat(short, &[w]))?;
                    let gain_long = cache.value(&long)? - cache.value(&cat(&long, &[w]))?;
                    diminishing.record(gain_short - gain_long, || format!("S={short:?} S'={long:?} w={w}"));
                }
            }
        }
    }
    let mut unit = CheckReport::new("unit_supermodularity_ratio", premises);
    for len in 1..=steps {
        let all = sequences(k, len);
        for s in &all {
            let hs = cache.value(s)?;
            for sp in &all {
                let lhs = hs - cache.value(&cat(s, sp))?;
                let mut rhs = 0.0;
                for &w in sp {
                    rhs += hs - cache.value(&cat(s, &[w]))?;
                }
                unit.record(rhs - lhs, || format!("S={s:?} S'={sp:?}"));
            }
        }
    }
    Ok(vec![diminishing, unit])
}

/// Checks `h(S'⊕S) ≤ h(S)` for all `S`, nonempty `S'` with
/// `|S| + |S'| ≤ T`. Premises: every error map is contractive and has a
/// nonzero determinant.
pub fn postfix_monotonicity_check(ens: &Ensemble, e0: &Field, steps: usize) -> Result<CheckReport> {
    let contractive = ensemble_lipschitz(ens)?.iter().all(|r| *r < 1.0);
    let mut invertible = true;
    for h in ens.solvers() {
        let m = error_propagation_matrix(h, ens.operator())?;
        let hadamard: f64 = m.column_iter().map(|c| c.norm()).product();
        invertible &= hadamard > 0.0 && m.determinant().abs() > 1e-12 * hadamard;
    }
    let k = ens.len();
    let mut cache = ValueCache::new(ens, e0);
    let mut report = CheckReport::new("postfix_monotonicity", contractive && invertible);
    for total in 1..=steps {
        for pre_len in 1..=total {
            let tails = sequences(k, total - pre_len);
            for pre in sequences(k, pre_len) {
                for s in &tails {
                    let slack = cache.value(s)? - cache.value(&cat(&pre, s))?;
                    report.record(slack, || format!("S'={pre:?} S={s:?}"));
                }
            }
        }
    }
    Ok(report)
}

fn check_k(c: &CostVector) -> Result<()> {
    if c.len() < 2 {
        return Err(Error::InvalidParameter("loss identities need at least two solvers".into()));
    }
    Ok(())
}

/// Verifies that the cost of `chosen` equals
/// `Σ_{j≠chosen} Σ_{k≠j} c_k − (K − 2) Σ_j c_j`.
pub fn routing_loss_identity_holds(c: &CostVector, chosen: usize) -> Result<bool> {
    check_k(c)?;
    let k = c.len();
    if chosen == 0 || chosen > k {
        return Err(Error::BadId { id: chosen, k });
    }
    let v = c.values();
    let total: f64 = v.iter().sum();
    let mut rhs = 0.0;
    for j in (0..k).filter(|&j| j != chosen - 1) {
        rhs += total - v[j];
    }
    rhs -= (k as f64 - 2.0) * total;
    Ok((v[chosen - 1] - rhs).abs() <= LOSS_SLACK * total.max(1.0))
}

/// Verifies `log(2) · c_r ≤ Ψ(c, g)` where `r` is the highest-scoring
/// solver.
pub fn surrogate_bound_holds(c: &CostVector, logits: &[f64]) -> Result<bool> {
    check_k(c)?;
    let psi = surrogate_loss(c, logits)?;
    let chosen = argmax(logits).ok_or(Error::EmptyCosts)?;
    let total: f64 = c.values().iter().sum();
    Ok(std::f64::consts::LN_2 * c.values()[chosen] <= psi + LOSS_SLACK * total.max(1.0))
}
