//! The hybrid iteration `u ← u + C_{S_t}(f − L u)` and the rules that pick
//! `S_t`: a fixed solver, the HINTS schedule, the omniscient greedy oracle,
//! or a learned recurrent router.

mod loss;
mod trace;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::mode_error;
use crate::neural::{LstmRouter, LstmState, NeuralSolver};
use crate::pde::{project_zero_mean, DiscreteOperator, Field};
use crate::solvers::{apply_solver, MgConfig, SolverHandle, SolverKind};

pub(crate) use loss::argmax;
pub use loss::{
    greedy_select, log_softmax, routing_loss, softmax, surrogate_grad, surrogate_loss, surrogate_weights, CostVector,
};
pub use trace::RouteTrace;

/// Declarative ensemble member, resolved against an operator by
/// [`Ensemble::from_specs`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolverSpec {
    Jacobi {
        omega: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Gs {
        #[serde(default)]
        label: Option<String>,
    },
    Mg {
        #[serde(default)]
        config: Option<MgConfig>,
        #[serde(default)]
        label: Option<String>,
    },
    Deeponet {
        #[serde(default)]
        label: Option<String>,
    },
}

impl SolverSpec {
    pub fn is_neural(&self) -> bool {
        matches!(self, SolverSpec::Deeponet { .. })
    }
}

/// Ordered solvers with ids `1..=K` sharing one operator.
#[derive(Clone, Debug)]
pub struct Ensemble {
    op: DiscreteOperator,
    solvers: Vec<SolverHandle>,
}

impl Ensemble {
    /// Ids are reassigned to `1..=K` in the given order.
    pub fn new(op: DiscreteOperator, solvers: Vec<SolverHandle>) -> Result<Self> {
        if solvers.is_empty() {
            return Err(Error::InvalidParameter("an ensemble needs at least one solver".into()));
        }
        let solvers = solvers
            .into_iter()
            .enumerate()
            .map(|(i, mut h)| {
                h.id = i + 1;
                h
            })
            .collect();
        Ok(Self { op, solvers })
    }

    pub fn from_kinds(op: DiscreteOperator, kinds: Vec<SolverKind>) -> Result<Self> {
        let handles = kinds.into_iter().enumerate().map(|(i, k)| SolverHandle::new(i + 1, k)).collect::<Result<_>>()?;
        Self::new(op, handles)
    }

    /// Builds solvers from specs. Neural entries use `surrogate` and fail
    /// with [`Error::MissingSurrogate`] when none is given.
    pub fn from_specs(
        op: DiscreteOperator,
        specs: &[SolverSpec],
        surrogate: Option<Arc<NeuralSolver>>,
    ) -> Result<Self> {
        let mut handles = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let id = i + 1;
            let (kind, label) = match spec {
                SolverSpec::Jacobi { omega, label } => (SolverKind::WeightedJacobi { omega: *omega }, label),
                SolverSpec::Gs { label } => (SolverKind::GaussSeidel, label),
                SolverSpec::Mg { config, label } => {
                    let cfg = match config {
                        Some(c) => *c,
                        None => MgConfig::for_grid(op.grid().n(), 4)?,
                    };
                    (SolverKind::Multigrid(crate::solvers::Multigrid::new(&op, cfg)?), label)
                }
                SolverSpec::Deeponet { label } => {
                    let net = surrogate.clone().ok_or(Error::MissingSurrogate)?;
                    if net.grid() != op.grid() {
                        return Err(Error::GridMismatch {
                            expected: op.grid().to_string(),
                            got: net.grid().to_string(),
                        });
                    }
                    (SolverKind::Neural(net), label)
                }
            };
            let label = label.clone().unwrap_or_else(|| kind.default_label());
            handles.push(SolverHandle::with_label(id, kind, label)?);
        }
        Self::new(op, handles)
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    pub fn solvers(&self) -> &[SolverHandle] {
        &self.solvers
    }

    pub fn len(&self) -> usize {
        self.solvers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solvers.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&SolverHandle> {
        if id == 0 || id > self.solvers.len() {
            return Err(Error::BadId { id, k: self.solvers.len() });
        }
        Ok(&self.solvers[id - 1])
    }

    /// Ids of neural members.
    pub fn neural_ids(&self) -> Vec<usize> {
        self.solvers.iter().filter(|h| !h.is_linear()).map(|h| h.id).collect()
    }

    /// Error measured in the solvable subspace: zero-mean projection for
    /// the singular periodic Poisson operator, identity otherwise.
    pub fn measure(&self, e: &Field) -> Field {
        if self.op.is_singular() {
            project_zero_mean(e)
        } else {
            e.clone()
        }
    }

    /// Error after one step of solver `id`: `e − C_id(L e)`, measured.
    pub fn propagate(&self, id: usize, e: &Field) -> Result<Field> {
        let h = self.get(id)?;
        let r = self.op.apply(e)?;
        Ok(self.measure(&e.sub(&apply_solver(h, &self.op, &r)?)))
    }
}

/// `c_j = ‖(I − C_j L) e‖²` for every solver, in the solvable subspace.
pub fn step_costs(ens: &Ensemble, e: &Field) -> Result<CostVector> {
    let r = ens.op.apply(e)?;
    let costs = ens
        .solvers
        .iter()
        .map(|h| Ok(ens.measure(&e.sub(&apply_solver(h, &ens.op, &r)?)).norm_sq()))
        .collect::<Result<Vec<_>>>()?;
    CostVector::new(costs)
}

/// HINTS rule: the neural solver on every `tau`-th step, the classical one
/// otherwise.
pub fn hints_select(t: usize, tau: usize, neural_id: usize, classical_id: usize) -> Result<usize> {
    if tau < 2 {
        return Err(Error::BadTau(tau));
    }
    Ok(if t % tau == 0 { neural_id } else { classical_id })
}

/// Advances the router and returns the highest-scoring id (ties to the
/// lowest) with the new recurrent state.
pub fn learned_select(model: &LstmRouter, features: &[f64], state: &LstmState) -> Result<(usize, LstmState)> {
    let (logits, next, _) = model.step(features, state)?;
    Ok((argmax(&logits).unwrap() + 1, next))
}

/// Router input: unit-normalized residual, unit-normalized right-hand side,
/// and `log10(‖r‖/‖f‖)/10` (length `2N + 1`).
pub fn router_features(f: &Field, r: &Field) -> Vec<f64> {
    let rn = r.norm();
    let fnorm = f.norm();
    let mut out = Vec::with_capacity(2 * f.len() + 1);
    let unit = |v: &Field, n: f64, out: &mut Vec<f64>| {
        if n > 0.0 {
            out.extend(v.values().iter().map(|x| x / n));
        } else {
            out.extend(std::iter::repeat_n(0.0, v.len()));
        }
    };
    unit(r, rn, &mut out);
    unit(f, fnorm, &mut out);
    let ratio = if rn > 0.0 && fnorm > 0.0 { (rn / fnorm).log10() } else { -30.0 };
    out.push(ratio.max(-30.0) / 10.0);
    out
}

/// Length of [`router_features`] for `n_points` unknowns.
pub fn router_input_dim(n_points: usize) -> usize {
    2 * n_points + 1
}

/// Rule choosing the solver at each step.
#[derive(Clone, Debug)]
pub enum Policy {
    SingleSolver(usize),
    Hints { neural_id: usize, classical_id: usize, tau: usize },
    GreedyOracle,
    Learned(Arc<LstmRouter>),
}

impl Policy {
    fn validate(&self, ens: &Ensemble) -> Result<()> {
        match self {
            Policy::SingleSolver(id) => ens.get(*id).map(|_| ()),
            Policy::Hints { neural_id, classical_id, tau } => {
                ens.get(*neural_id)?;
                ens.get(*classical_id)?;
                if *tau < 2 {
                    return Err(Error::BadTau(*tau));
                }
                Ok(())
            }
            Policy::GreedyOracle => Ok(()),
            Policy::Learned(model) => {
                if model.arch().num_solvers != ens.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "router scores {} solvers, ensemble has {}",
                        model.arch().num_solvers,
                        ens.len()
                    )));
                }
                if model.arch().input_dim != router_input_dim(ens.op.grid().len()) {
                    return Err(Error::ShapeMismatch("router input width does not match the grid".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Record the per-step cost vector (always computed by the oracle).
    pub record_costs: bool,
    /// Fourier shells whose error is recorded at every iterate.
    pub modes: Vec<usize>,
}

/// Runs `T` hybrid steps from `u_0 = 0`.
///
/// The true solution is computed spectrally and used for error norms and,
/// for [`Policy::GreedyOracle`], for the costs. An iterate whose values or
/// error/residual norms are no longer finite aborts
/// with [`Error::DivergedIterate`]; its trace includes the offending choice
/// and the last finite error and residual.
pub fn run_hybrid(ens: &Ensemble, policy: &Policy, f: &Field, steps: usize, opts: &RunOptions) -> Result<RouteTrace> {
    policy.validate(ens)?;
    let op = &ens.op;
    let exact = op.reference_solution(f)?;
    let mut u = Field::zeros(op.grid());
    let mut trace = RouteTrace {
        chosen: Vec::with_capacity(steps),
        errors: Vec::with_capacity(steps + 1),
        residuals: Vec::with_capacity(steps + 1),
        costs: opts.record_costs.then(Vec::new),
        mode_errors: (!opts.modes.is_empty()).then(Vec::new),
        final_iterate: u.clone(),
    };
    let record = |trace: &mut RouteTrace, e: &Field, r: &Field| -> Result<()> {
        trace.errors.push(e.norm());
        trace.residuals.push(r.norm());
        if let Some(m) = &mut trace.mode_errors {
            m.push(opts.modes.iter().map(|&k| mode_error(e, k)).collect::<Result<Vec<_>>>()?);
        }
        Ok(())
    };
    let mut e = ens.measure(&exact.sub(&u));
    let mut r = op.residual(&u, f)?;
    record(&mut trace, &e, &r)?;
    let mut state = match policy {
        Policy::Learned(m) => Some(m.initial_state()),
        _ => None,
    };
    for t in 1..=steps {
        let costs =
            if opts.record_costs || matches!(policy, Policy::GreedyOracle) { Some(step_costs(ens, &e)?) } else { None };
        let id = match policy {
            Policy::SingleSolver(id) => *id,
            Policy::Hints { neural_id, classical_id, tau } => hints_select(t, *tau, *neural_id, *classical_id)?,
            Policy::GreedyOracle => greedy_select(costs.as_ref().unwrap())?,
            Policy::Learned(model) => {
                let (id, next) = learned_select(model, &router_features(f, &r), state.as_ref().unwrap())?;
                state = Some(next);
                id
            }
        };
        if let (Some(store), Some(c)) = (&mut trace.costs, costs) {
            store.push(c.0);
        }
        let correction = apply_solver(ens.get(id)?, op, &r)?;
        let next = u.add(&correction);
        trace.chosen.push(id);
        let next_e = ens.measure(&exact.sub(&next));
        let next_r = op.residual_unchecked(&next, f);
        if !next.is_finite() || !next_e.norm().is_finite() || !next_r.norm().is_finite() {
            trace.final_iterate = next;
            return Err(Error::DivergedIterate { step: t, trace: Box::new(trace) });
        }
        u = next;
        e = next_e;
        r = next_r;
        record(&mut trace, &e, &r)?;
    }
    trace.final_iterate = u;
    Ok(trace)
}
