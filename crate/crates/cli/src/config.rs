//! Experiment configuration read from a TOML file.

use std::path::{Path, PathBuf};

use greedy_route::grf::GrfSpec;
use greedy_route::neural::{DeepOnetArch, RouterArch};
use greedy_route::routing::{router_input_dim, Ensemble, Policy, SolverSpec};
use greedy_route::theory::TheorySuite;
use greedy_route::training::TrainConfig;
use greedy_route::{DiscreteOperator, EquationKind, GridSpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Hybrid iterations per run.
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub ensemble: Vec<SolverSpec>,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub router: RouterConfig,
    #[serde(default)]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub theory: TheorySuite,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_steps() -> usize {
    300
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Poisson,
    Helmholtz,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub equation: Equation,
    #[serde(default = "one")]
    pub dim: usize,
    pub n: usize,
    /// Helmholtz shift `a²`.
    #[serde(default)]
    pub a2: f64,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Random-field covariance `(4π²|k|² + shift)^(−power)`.
    pub shift: f64,
    pub power: f64,
    /// Dataset directory; defaults to `<out>/data`.
    pub dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train: 2000, val: 200, test: 64, shift: 9.0, power: 2.0, dir: None }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub train: TrainConfig,
    pub branch_hidden: Option<Vec<usize>>,
    pub trunk_hidden: Option<Vec<usize>>,
    pub latent: Option<usize>,
    /// Checkpoint path; defaults to `<out>/deeponet.grck`.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub train: TrainConfig,
    /// Training trajectories, taken from the front of the training set.
    pub trajectories: usize,
    /// Validation trajectories, taken from the front of the validation set.
    pub val_trajectories: usize,
    /// Rollout length of training trajectories; defaults to the global `steps`.
    pub steps: Option<usize>,
    pub encoder_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Checkpoint path; defaults to `<out>/router.grck`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            trajectories: 64,
            val_trajectories: 16,
            steps: None,
            encoder_dim: 64,
            hidden: 64,
            layers: 3,
            checkpoint: None,
        }
    }
}

/// Policy entry of a `run` or `compare`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicySpec {
    Single {
        solver: usize,
        label: Option<String>,
        /// Overrides the global step count (e.g. fewer multigrid cycles).
        steps: Option<usize>,
    },
    Hints {
        neural: usize,
        classical: usize,
        tau: usize,
        label: Option<String>,
        steps: Option<usize>,
    },
    Greedy {
        label: Option<String>,
        steps: Option<usize>,
    },
    Learned {
        label: Option<String>,
        steps: Option<usize>,
    },
}

impl PolicySpec {
    pub fn steps(&self, default: usize) -> usize {
        match self {
            PolicySpec::Single { steps, .. }
            | PolicySpec::Hints { steps, .. }
            | PolicySpec::Greedy { steps, .. }
            | PolicySpec::Learned { steps, .. } => steps.unwrap_or(default),
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, PolicySpec::Learned { .. })
    }

    pub fn label(&self, ens: &Ensemble) -> String {
        match self {
            PolicySpec::Single { label: Some(l), .. }
            | PolicySpec::Hints { label: Some(l), .. }
            | PolicySpec::Greedy { label: Some(l), .. }
            | PolicySpec::Learned { label: Some(l), .. } => l.clone(),
            PolicySpec::Single { solver, .. } => {
                ens.get(*solver).map(|h| format!("{} only", h.label)).unwrap_or_else(|_| format!("solver {solver}"))
            }
            PolicySpec::Hints { classical, tau, .. } => {
                let c = ens.get(*classical).map(|h| h.label.clone()).unwrap_or_default();
                format!("hints-{c} (tau={tau})")
            }
            PolicySpec::Greedy { .. } => "greedy oracle".into(),
            PolicySpec::Learned { .. } => "learned router".into(),
        }
    }

    /// Resolves to a core policy; `router` is required for learned entries.
    pub fn resolve(&self, router: Option<&std::sync::Arc<greedy_route::neural::LstmRouter>>) -> Policy {
        match self {
            PolicySpec::Single { solver, .. } => Policy::SingleSolver(*solver),
            PolicySpec::Hints { neural, classical, tau, .. } => {
                Policy::Hints { neural_id: *neural, classical_id: *classical, tau: *tau }
            }
            PolicySpec::Greedy { .. } => Policy::GreedyOracle,
            PolicySpec::Learned { .. } => Policy::Learned(router.expect("router loaded").clone()),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Index into `policies`.
    pub policy: usize,
    /// Test-set instance to run.
    pub instance: usize,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Fourier shells whose error is written per step.
    pub modes: Vec<usize>,
    /// Add per-solver cost columns to traces.
    pub record_costs: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.router.steps == Some(0) {
            return bad("router.steps must be at least 1".into());
        }
        if self.problem.equation == Equation::Poisson && self.problem.a2 != 0.0 {
            return bad("a2 is only meaningful for the helmholtz equation".into());
        }
        for &m in &self.metrics.modes {
            if 2 * m >= self.problem.n {
                return bad(format!("mode {m} must be below n/2 = {}", self.problem.n / 2));
            }
        }
        for (i, p) in self.policies.iter().enumerate() {
            if p.steps(self.steps) == 0 {
                return bad(format!("policy {} has zero steps", i + 1));
            }
            let ids: Vec<usize> = match p {
                PolicySpec::Single { solver, .. } => vec![*solver],
                PolicySpec::Hints { neural, classical, tau, .. } => {
                    if *tau < 2 {
                        return bad(format!("policy {}: tau must be at least 2", i + 1));
                    }
                    vec![*neural, *classical]
                }
                _ => vec![],
            };
            for id in ids {
                if id == 0 || id > self.ensemble.len() {
                    return bad(format!(
                        "policy {} refers to solver {id}, but the ensemble has {} solvers",
                        i + 1,
                        self.ensemble.len()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> EquationKind {
        match self.problem.equation {
            Equation::Poisson => EquationKind::Poisson,
            Equation::Helmholtz => EquationKind::Helmholtz { a2: self.problem.a2 },
        }
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        Ok(GridSpec::new(self.problem.dim, self.problem.n)?)
    }

    pub fn operator(&self) -> Result<DiscreteOperator, CliError> {
        Ok(DiscreteOperator::new(self.grid()?, self.kind())?)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn surrogate_path(&self) -> PathBuf {
        self.surrogate.checkpoint.clone().unwrap_or_else(|| self.out.join("deeponet.grck"))
    }

    pub fn router_path(&self) -> PathBuf {
        self.router.checkpoint.clone().unwrap_or_else(|| self.out.join("router.grck"))
    }

    pub fn needs_surrogate(&self) -> bool {
        self.ensemble.iter().any(SolverSpec::is_neural)
    }

    /// Random-field settings of one split; splits use disjoint seeds.
    pub fn grf(&self, split: Split) -> Result<GrfSpec, CliError> {
        let spec = GrfSpec {
            grid: self.grid()?,
            shift: self.data.shift,
            power: self.data.power,
            zero_dc: self.kind().is_singular(),
            seed: self.seed ^ ((split as u64 + 1) << 48),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn deeponet_arch(&self) -> Result<DeepOnetArch, CliError> {
        let mut arch = DeepOnetArch::standard(self.grid()?);
        if let Some(b) = &self.surrogate.branch_hidden {
            arch.branch_hidden = b.clone();
        }
        if let Some(t) = &self.surrogate.trunk_hidden {
            arch.trunk_hidden = t.clone();
        }
        if let Some(l) = self.surrogate.latent {
            arch.latent = l;
        }
        Ok(arch)
    }

    pub fn router_arch(&self) -> Result<RouterArch, CliError> {
        Ok(RouterArch {
            input_dim: router_input_dim(self.grid()?.len()),
            encoder_dim: self.router.encoder_dim,
            hidden: self.router.hidden,
            layers: self.router.layers,
            num_solvers: self.ensemble.len(),
        })
    }

    /// Training settings with the global seed mixed into the section seed.
    pub fn train_config(&self, section: &TrainConfig) -> TrainConfig {
        TrainConfig { seed: self.seed.wrapping_add(section.seed), ..section.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}
