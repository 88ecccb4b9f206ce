use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pde::{DiscreteOperator, EquationKind, Field, GridSpec};
use crate::routing::{CostVector, Ensemble};
use crate::solvers::SolverKind;

use super::{
    ensemble_lipschitz, greedy_bound_check_with, greedy_sequence, postfix_monotonicity_check,
    routing_loss_identity_holds, sequence_value, spectral_value, supermodularity_check, surrogate_bound_holds,
    CheckReport,
};

/// Randomized verification settings. Every check runs on a 1D periodic
/// Poisson problem with random zero-mean initial errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySuite {
    pub n: usize,
    pub seed: u64,
    /// Jacobi weights the random ensembles draw from.
    pub omegas: Vec<f64>,
    /// Whether Gauss-Seidel joins the pool.
    pub gauss_seidel: bool,
    pub bound_trials: usize,
    pub max_solvers: usize,
    pub max_steps: usize,
    pub spectral_trials: usize,
    pub spectral_max_steps: usize,
    pub supermodular_trials: usize,
    pub supermodular_steps: usize,
    pub postfix_trials: usize,
    pub postfix_steps: usize,
    pub loss_trials: usize,
    pub max_loss_solvers: usize,
}

impl Default for TheorySuite {
    fn default() -> Self {
        Self {
            n: 8,
            seed: 0,
            omegas: vec![0.5, 0.67, 1.0],
            gauss_seidel: true,
            bound_trials: 200,
            max_solvers: 3,
            max_steps: 5,
            spectral_trials: 100,
            spectral_max_steps: 8,
            supermodular_trials: 10,
            supermodular_steps: 4,
            postfix_trials: 10,
            postfix_steps: 4,
            loss_trials: 10_000,
            max_loss_solvers: 5,
        }
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Bound = 1,
    Spectral,
    Supermodular,
    Postfix,
    Loss,
}

impl TheorySuite {
    fn rng(&self, stream: Stream, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((stream as u64) << 40) | trial as u64);
        rng
    }

    fn pool(&self, jacobi_only: bool) -> Vec<SolverKind> {
        let mut pool: Vec<SolverKind> = self.omegas.iter().map(|&omega| SolverKind::WeightedJacobi { omega }).collect();
        if self.gauss_seidel && !jacobi_only {
            pool.push(SolverKind::GaussSeidel);
        }
        pool
    }

    fn ensemble(&self, op: &DiscreteOperator, k: usize, jacobi_only: bool, rng: &mut impl Rng) -> Result<Ensemble> {
        let pool = self.pool(jacobi_only);
        let kinds = (0..k).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
        Ensemble::from_kinds(op.clone(), kinds)
    }
}

fn zero_mean_error(op: &DiscreteOperator, rng: &mut impl Rng) -> Result<Field> {
    let v: Vec<f64> = (0..op.grid().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = Field::new(op.grid(), v)?;
    let f = f.map(|x| x - f.mean());
    Ok(f.scaled(1.0 / f.norm()))
}

/// Reports keyed by name and premise status, in first-seen order.
#[derive(Default)]
struct Reports(Vec<CheckReport>);

impl Reports {
    fn add(&mut self, r: &CheckReport) {
        match self.0.iter_mut().find(|x| x.name == r.name && x.premises == r.premises) {
            Some(x) => x.merge(r),
            None => self.0.push(r.clone()),
        }
    }
}

fn bound_trial(suite: &TheorySuite, op: &DiscreteOperator, trial: usize) -> Result<Vec<CheckReport>> {
    let mut rng = suite.rng(Stream::Bound, trial);
    let k = rng.random_range(1..=suite.max_solvers.max(1));
    let ens = suite.ensemble(op, k, false, &mut rng)?;
    let steps = rng.random_range(1..=suite.max_steps.max(1));
    let e0 = zero_mean_error(op, &mut rng)?;
    let rhos = ensemble_lipschitz(&ens)?;
    let contractive = rhos.iter().all(|r| *r < 1.0);
    let report = greedy_bound_check_with(&ens, &e0, steps, &rhos)?;
    let mut bound = CheckReport::new("greedy_bound", contractive);
    bound.record(report.slack(), || format!("trial {trial}: {report:?}"));

    // Myopic choices can lose to a repeated single solver even when all
    // maps commute, so this comparison is informational.
    let mut dominance = CheckReport::new("greedy_beats_single_solvers", false);
    let greedy = greedy_sequence(&ens, &e0, steps)?;
    let mut best_single = f64::INFINITY;
    for id in 1..=ens.len() {
        best_single = best_single.min(sequence_value(&ens, &vec![id; steps], &e0)?);
    }
    dominance.record(best_single - greedy.value, || format!("trial {trial}: greedy {:?}", greedy.sequence));
    Ok(vec![bound, dominance])
}

fn spectral_trial(suite: &TheorySuite, op: &DiscreteOperator, trial: usize) -> Result<CheckReport> {
    let mut rng = suite.rng(Stream::Spectral, trial);
    let k = rng.random_range(1..=suite.max_solvers.max(1));
    let ens = suite.ensemble(op, k, true, &mut rng)?;
    let len = rng.random_range(0..=suite.spectral_max_steps);
    let seq: Vec<usize> = (0..len).map(|_| rng.random_range(1..=k)).collect();
    let e0 = zero_mean_error(op, &mut rng)?;
    let direct = sequence_value(&ens, &seq, &e0)?;
    let spectral = spectral_value(&ens, &seq, &e0)?;
    let mut r = CheckReport::new("spectral_identity", true);
    r.record(1e-9 * direct - (spectral - direct).abs(), || format!("trial {trial}: {seq:?} {spectral} vs {direct}"));
    Ok(r)
}

fn pair(suite: &TheorySuite, op: &DiscreteOperator, jacobi_only: bool, rng: &mut impl Rng) -> Result<Ensemble> {
    let pool = suite.pool(jacobi_only);
    let i = rng.random_range(0..pool.len());
    let j = if pool.len() > 1 { (i + rng.random_range(1..pool.len())) % pool.len() } else { i };
    Ensemble::from_kinds(op.clone(), vec![pool[i].clone(), pool[j].clone()])
}

fn supermodular_trial(suite: &TheorySuite, op: &DiscreteOperator, trial: usize) -> Result<Vec<CheckReport>> {
    let mut rng = suite.rng(Stream::Supermodular, trial);
    let e0 = zero_mean_error(op, &mut rng)?;
    let mut out = supermodularity_check(&pair(suite, op, true, &mut rng)?, &e0, suite.supermodular_steps)?;
    if suite.gauss_seidel {
        let mixed = Ensemble::from_kinds(
            op.clone(),
            vec![SolverKind::GaussSeidel, suite.pool(true)[rng.random_range(0..suite.omegas.len())].clone()],
        )?;
        out.extend(supermodularity_check(&mixed, &e0, suite.supermodular_steps)?);
    }
    Ok(out)
}

/// One pool pair and one pair of random Jacobi weights, which are
/// invertible with probability one.
fn postfix_trial(suite: &TheorySuite, op: &DiscreteOperator, trial: usize) -> Result<Vec<CheckReport>> {
    let mut rng = suite.rng(Stream::Postfix, trial);
    let e0 = zero_mean_error(op, &mut rng)?;
    let pooled = postfix_monotonicity_check(&pair(suite, op, false, &mut rng)?, &e0, suite.postfix_steps)?;
    let kinds = (0..2).map(|_| SolverKind::WeightedJacobi { omega: rng.random_range(0.2..0.95) }).collect();
    let random = Ensemble::from_kinds(op.clone(), kinds)?;
    Ok(vec![pooled, postfix_monotonicity_check(&random, &e0, suite.postfix_steps)?])
}

fn loss_trial(suite: &TheorySuite, trial: usize) -> Result<Vec<CheckReport>> {
    let mut rng = suite.rng(Stream::Loss, trial);
    let k = rng.random_range(2..=suite.max_loss_solvers.max(2));
    let c = CostVector::new((0..k).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
    let chosen = rng.random_range(1..=k);
    let mut identity = CheckReport::new("routing_loss_identity", true);
    let ok = routing_loss_identity_holds(&c, chosen)?;
    identity.record(if ok { 0.0 } else { -1.0 }, || format!("costs {:?} chosen {chosen}", c.values()));
    let mut bound = CheckReport::new("surrogate_upper_bound", true);
    let ok = surrogate_bound_holds(&c, &logits)?;
    bound.record(if ok { 0.0 } else { -1.0 }, || format!("costs {:?} logits {logits:?}", c.values()));
    Ok(vec![identity, bound])
}

/// Runs every randomized check and returns one report per check name and
/// premise status. Trials run in parallel; results do not depend on the
/// thread count.
pub fn verify_theory(suite: &TheorySuite) -> Result<Vec<CheckReport>> {
    let op = DiscreteOperator::new(GridSpec::one_d(suite.n)?, EquationKind::Poisson)?;
    let mut reports = Reports::default();
    let collect = |reports: &mut Reports, batches: Vec<Vec<CheckReport>>| {
        for r in batches.iter().flatten() {
            reports.add(r);
        }
    };
    let b = (0..suite.bound_trials).into_par_iter().map(|t| bound_trial(suite, &op, t)).collect::<Result<Vec<_>>>()?;
    collect(&mut reports, b);
    let s = (0..suite.spectral_trials)
        .into_par_iter()
        .map(|t| spectral_trial(suite, &op, t).map(|r| vec![r]))
        .collect::<Result<Vec<_>>>()?;
    collect(&mut reports, s);
    let m = (0..suite.supermodular_trials)
        .into_par_iter()
        .map(|t| supermodular_trial(suite, &op, t))
        .collect::<Result<Vec<_>>>()?;
    collect(&mut reports, m);
    let p =
        (0..suite.postfix_trials).into_par_iter().map(|t| postfix_trial(suite, &op, t)).collect::<Result<Vec<_>>>()?;
    collect(&mut reports, p);
    let l = (0..suite.loss_trials).into_par_iter().map(|t| loss_trial(suite, t)).collect::<Result<Vec<_>>>()?;
    collect(&mut reports, l);
    Ok(reports.0)
}
