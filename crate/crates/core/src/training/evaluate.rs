use rayon::prelude::*;

use crate::error::Result;
use crate::grf::Dataset;
use crate::metrics::{mean_and_se, RunMetrics};
use crate::routing::{run_hybrid, Ensemble, Policy, RouteTrace, RunOptions};

/// Per-instance metrics of one policy plus their mean and standard error.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub per_instance: Vec<RunMetrics>,
    /// `(mean, standard error)` of the final error norm.
    pub final_error: (f64, f64),
    /// `(mean, standard error)` of `Σ_{t=1..T} ‖e_t‖`.
    pub error_auc: (f64, f64),
    /// `(mean, standard error)` of the final residual norm.
    pub final_residual: (f64, f64),
    pub traces: Vec<RouteTrace>,
}

/// Runs `policy` for `steps` steps on every right-hand side of `test`.
/// Instances run in parallel; results keep dataset order.
pub fn evaluate(
    ens: &Ensemble,
    policy: &Policy,
    test: &Dataset,
    steps: usize,
    opts: &RunOptions,
) -> Result<Evaluation> {
    let traces =
        test.samples.par_iter().map(|s| run_hybrid(ens, policy, &s.f, steps, opts)).collect::<Result<Vec<_>>>()?;
    let per_instance: Vec<RunMetrics> = traces.iter().map(RunMetrics::of).collect();
    let stat = |g: fn(&RunMetrics) -> f64| mean_and_se(&per_instance.iter().map(g).collect::<Vec<_>>());
    Ok(Evaluation {
        final_error: stat(|m| m.final_error),
        error_auc: stat(|m| m.error_auc),
        final_residual: stat(|m| m.final_residual),
        per_instance,
        traces,
    })
}
