//! Per-step routing costs and the losses used to train routers.

use crate::error::{Error, Result};

/// Squared post-step error norms `c_j = ‖(I − C_j L) e‖²`, one per solver
/// in ensemble order.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVector(pub Vec<f64>);

impl CostVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyCosts);
        }
        if let Some(i) = values.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cost {} = {} is not a finite non-negative value",
                i + 1,
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Every cost divided by `s` (used to make costs scale-free).
    pub fn scaled(&self, s: f64) -> CostVector {
        CostVector(self.0.iter().map(|c| c * s).collect())
    }
}

fn check_id(id: usize, k: usize) -> Result<()> {
    if id == 0 || id > k {
        return Err(Error::BadId { id, k });
    }
    Ok(())
}

/// Solver id (1-based) with the smallest cost; ties go to the lowest id.
pub fn greedy_select(c: &CostVector) -> Result<usize> {
    argmin(c.values()).map(|i| i + 1).ok_or(Error::EmptyCosts)
}

pub(crate) fn argmin(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        match best {
            Some(b) if !(*x < v[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

pub(crate) fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        match best {
            Some(b) if !(*x > v[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Cost of the chosen solver.
pub fn routing_loss(c: &CostVector, chosen: usize) -> Result<f64> {
    check_id(chosen, c.len())?;
    Ok(c.0[chosen - 1])
}

/// `w_j = Σ_{k≠j} c_k`
pub fn surrogate_weights(c: &CostVector) -> Vec<f64> {
    let total: f64 = c.0.iter().sum();
    c.0.iter().map(|cj| total - cj).collect()
}

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|g| (g - max).exp()).sum::<f64>().ln();
    logits.iter().map(|g| g - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

fn check_lengths(c: &CostVector, logits: &[f64]) -> Result<()> {
    if c.len() != logits.len() {
        return Err(Error::LengthMismatch { expected: c.len(), got: logits.len() });
    }
    if c.is_empty() {
        return Err(Error::EmptyCosts);
    }
    Ok(())
}

/// Cost-weighted cross-entropy `Ψ = −Σ_j w_j log softmax_j(g)`.
pub fn surrogate_loss(c: &CostVector, logits: &[f64]) -> Result<f64> {
    check_lengths(c, logits)?;
    let w = surrogate_weights(c);
    let ls = log_softmax(logits);
    Ok(-w.iter().zip(&ls).map(|(wj, l)| if *wj == 0.0 { 0.0 } else { wj * l }).sum::<f64>())
}

/// `∂Ψ/∂g_j = W p_j − w_j` with `W = Σ_j w_j` and `p = softmax(g)`.
pub fn surrogate_grad(c: &CostVector, logits: &[f64]) -> Result<Vec<f64>> {
    check_lengths(c, logits)?;
    let w = surrogate_weights(c);
    let total: f64 = w.iter().sum();
    Ok(softmax(logits).iter().zip(&w).map(|(p, wj)| total * p - wj).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[f64]) -> CostVector {
        CostVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn greedy_ties_and_order() {
        assert_eq!(greedy_select(&cv(&[0.5, 0.5])).unwrap(), 1);
        assert_eq!(greedy_select(&cv(&[3.0, 1.0, 2.0])).unwrap(), 2);
        assert!(matches!(CostVector::new(vec![]), Err(Error::EmptyCosts)));
        assert!(CostVector::new(vec![-1.0]).is_err());
        assert!(matches!(greedy_select(&CostVector(vec![])), Err(Error::EmptyCosts)));
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(argmax(&[0.1, 2.0]), Some(1));
    }

    #[test]
    fn routing_loss_values() {
        let c = cv(&[1.0, 3.0]);
        assert_eq!(routing_loss(&c, 1).unwrap(), 1.0);
        assert_eq!(routing_loss(&c, greedy_select(&c).unwrap()).unwrap(), 1.0);
        assert!(matches!(routing_loss(&c, 3), Err(Error::BadId { .. })));
        assert!(matches!(routing_loss(&c, 0), Err(Error::BadId { .. })));
    }

    #[test]
    fn surrogate_hand_values() {
        let c = cv(&[1.0, 3.0]);
        let psi = surrogate_loss(&c, &[0.0, 0.0]).unwrap();
        assert!((psi - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(surrogate_grad(&c, &[0.0, 0.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(surrogate_loss(&cv(&[0.0, 0.0, 0.0]), &[5.0, -3.0, 1.0]).unwrap(), 0.0);
        let g = surrogate_grad(&cv(&[2.0, 2.0, 2.0]), &[0.0; 3]).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15));
        assert!(matches!(surrogate_loss(&c, &[0.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn stable_for_large_logits() {
        let c = cv(&[1.0, 2.0]);
        let psi = surrogate_loss(&c, &[1000.0, -1000.0]).unwrap();
        assert!(psi.is_finite());
        assert!((psi - 1.0 * 2000.0).abs() < 1e-9);
    }
}
