use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grf::Dataset;
use crate::neural::{clip_global_norm, AdamW, LstmRouter, Model, ModelCheckpoint, Parameterized, RouterArch, Tensor};
use crate::pde::Field;
use crate::routing::{
    argmax, greedy_select, router_features, step_costs, surrogate_grad, surrogate_loss, CostVector, Ensemble,
};
use crate::solvers::apply_solver;

use super::{EpochLog, ScheduleState, TrainConfig};

/// Oracle rollout that always advances with the greedy choice.
#[derive(Clone, Debug)]
pub struct TeacherRollout {
    /// Greedy solver id at steps `1..=T`.
    pub labels: Vec<usize>,
    /// `u_0 = 0, u_1, …, u_T`.
    pub iterates: Vec<Field>,
    /// Unnormalized cost vector at each step.
    pub costs: Vec<CostVector>,
}

pub fn rollout_teacher_forced(ens: &Ensemble, f: &Field, steps: usize) -> Result<TeacherRollout> {
    let op = ens.operator();
    let exact = op.reference_solution(f)?;
    let mut u = Field::zeros(op.grid());
    let mut out = TeacherRollout {
        labels: Vec::with_capacity(steps),
        iterates: Vec::with_capacity(steps + 1),
        costs: Vec::with_capacity(steps),
    };
    out.iterates.push(u.clone());
    for _ in 0..steps {
        let e = ens.measure(&exact.sub(&u));
        let costs = step_costs(ens, &e)?;
        let label = greedy_select(&costs)?;
        let r = op.residual(&u, f)?;
        u = u.add(&apply_solver(ens.get(label)?, op, &r)?);
        if let Some(i) = u.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        out.labels.push(label);
        out.costs.push(costs);
        out.iterates.push(u.clone());
    }
    Ok(out)
}

/// Settings for one router rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySettings {
    pub steps: usize,
    /// Probability of advancing with the greedy label instead of the
    /// router's choice.
    pub p_tf: f64,
    /// Backpropagation segment length.
    pub window: usize,
    /// Divide each step's costs by their sum.
    pub normalize_costs: bool,
    pub with_grads: bool,
}

#[derive(Clone, Debug)]
pub struct TrajectoryOutcome {
    /// Surrogate loss averaged over steps.
    pub loss: f64,
    /// Gradient of `loss`; empty when not requested.
    pub grads: Vec<Tensor>,
    /// Steps that advanced with the greedy label.
    pub teacher_steps: usize,
}

/// Rolls the router along one right-hand side and accumulates the
/// cost-weighted cross-entropy.
///
/// The rollout is cut into consecutive segments of `window` steps.
/// Gradients are backpropagated within each segment; the recurrent state
/// is carried into the next segment as a constant.
pub fn router_trajectory(
    model: &LstmRouter,
    ens: &Ensemble,
    f: &Field,
    settings: TrajectorySettings,
    rng: &mut impl Rng,
) -> Result<TrajectoryOutcome> {
    let op = ens.operator();
    let exact = op.reference_solution(f)?;
    let steps = settings.steps;
    let window = settings.window.max(1);
    let mut u = Field::zeros(op.grid());
    let mut state = model.initial_state();
    let mut grads = if settings.with_grads { model.zero_grads() } else { Vec::new() };
    let mut segment = Vec::with_capacity(window);
    let mut dlogits = Vec::with_capacity(window);
    let mut loss = 0.0;
    let mut teacher_steps = 0;
    let inv_t = if steps > 0 { 1.0 / steps as f64 } else { 0.0 };
    for t in 1..=steps {
        let e = ens.measure(&exact.sub(&u));
        let r = op.residual(&u, f)?;
        let raw = step_costs(ens, &e)?;
        let label = greedy_select(&raw)?;
        let total: f64 = raw.values().iter().sum();
        let costs = if settings.normalize_costs && total > 0.0 { raw.scaled(1.0 / total) } else { raw };
        let (logits, next, cache) = model.step(&router_features(f, &r), &state)?;
        loss += surrogate_loss(&costs, &logits)? * inv_t;
        if settings.with_grads {
            let g: Vec<f64> = surrogate_grad(&costs, &logits)?.into_iter().map(|v| v * inv_t).collect();
            segment.push(cache);
            dlogits.push(g);
            if segment.len() == window || t == steps {
                model.backward(&segment, &dlogits, &mut grads)?;
                segment.clear();
                dlogits.clear();
            }
        }
        state = next;
        let teacher = rng.random::<f64>() < settings.p_tf;
        let choice = if teacher {
            teacher_steps += 1;
            label
        } else {
            argmax(&logits).unwrap() + 1
        };
        u = u.add(&apply_solver(ens.get(choice)?, op, &r)?);
        if let Some(i) = u.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
    }
    Ok(TrajectoryOutcome { loss, grads, teacher_steps })
}

pub struct RouterTraining {
    /// Parameters at the epoch with the lowest validation loss.
    pub best: ModelCheckpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl RouterTraining {
    pub fn model(&self) -> LstmRouter {
        self.best.clone().into_router().expect("router checkpoint")
    }
}

fn trajectory_rng(seed: u64, epoch: usize, validation: bool, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a11_0f_a11);
    rng.set_stream(((epoch as u64) << 33) | ((validation as u64) << 32) | index as u64);
    rng
}

fn check_dataset(ens: &Ensemble, ds: &Dataset) -> Result<()> {
    let op = ens.operator();
    if ds.grid != op.grid() {
        return Err(Error::GridMismatch { expected: op.grid().to_string(), got: ds.grid.to_string() });
    }
    if ds.kind != op.kind() {
        return Err(Error::KindMismatch { expected: op.kind().name().to_string(), found: ds.kind.name().to_string() });
    }
    Ok(())
}

/// Trains an LSTM router with scheduled sampling and truncated
/// backpropagation, keeping the parameters with the lowest validation
/// loss.
///
/// Each epoch uses `teacher_prob` and `bptt_window` for its sampling
/// probability and segment length. Validation trajectories are rolled out
/// with the same probability unless `validate_free_running` is set.
pub fn train_router(
    ens: &Ensemble,
    train: &Dataset,
    val: &Dataset,
    arch: RouterArch,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<RouterTraining> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dataset(ens, train)?;
    if !val.is_empty() {
        check_dataset(ens, val)?;
    }
    if arch.num_solvers != ens.len() {
        return Err(Error::ShapeMismatch(format!(
            "router scores {} solvers, ensemble has {}",
            arch.num_solvers,
            ens.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = LstmRouter::init(arch, &mut rng)?;
    let mut opt = AdamW::for_model(&model, cfg.lr, cfg.weight_decay);
    let batch_size = cfg.batch_size.unwrap_or(32);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelCheckpoint)> = None;
    for epoch in 1..=cfg.epochs {
        let sched = ScheduleState::at(cfg, epoch, steps);
        let settings = TrajectorySettings {
            steps,
            p_tf: sched.p_tf,
            window: sched.w_bptt,
            normalize_costs: cfg.normalize_costs,
            with_grads: true,
        };
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let outcomes = batch
                .par_iter()
                .map(|&i| {
                    let mut trng = trajectory_rng(cfg.seed, epoch, false, i);
                    router_trajectory(&model, ens, &train.samples[i].f, settings, &mut trng)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = model.zero_grads();
            let inv_b = 1.0 / batch.len() as f64;
            for o in &outcomes {
                train_loss += o.loss;
                for (g, og) in grads.iter_mut().zip(&o.grads) {
                    for (a, b) in g.data_mut().iter_mut().zip(og.data()) {
                        *a += b * inv_b;
                    }
                }
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            opt.update(model.parameters_mut(), &grads)?;
        }
        train_loss /= train.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            let vs = TrajectorySettings {
                p_tf: if cfg.validate_free_running { 0.0 } else { sched.p_tf },
                with_grads: false,
                ..settings
            };
            let losses = (0..val.len())
                .into_par_iter()
                .map(|i| {
                    let mut trng = trajectory_rng(cfg.seed, epoch, true, i);
                    router_trajectory(&model, ens, &val.samples[i].f, vs, &mut trng).map(|o| o.loss)
                })
                .collect::<Result<Vec<_>>>()?;
            losses.iter().sum::<f64>() / val.len() as f64
        };
        log.push(EpochLog { epoch, train_loss, val_loss, p_tf: Some(sched.p_tf), w_bptt: Some(sched.w_bptt) });
        if best.as_ref().is_none_or(|(v, _, _)| val_loss < *v) {
            let ck = ModelCheckpoint { model: Model::Router(model.clone()), optimizer: Some(opt.clone()) };
            best = Some((val_loss, epoch, ck));
        }
    }
    let (best, best_epoch) = match best {
        Some((_, e, ck)) => (ck, e),
        None => (ModelCheckpoint { model: Model::Router(model), optimizer: Some(opt) }, 0),
    };
    Ok(RouterTraining { best, best_epoch, log })
}
