//! Offline training of the operator surrogate and the router, plus
//! evaluation of policies over a test set.

mod evaluate;
mod router;
mod surrogate;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Activation;

pub use evaluate::{evaluate, Evaluation};
pub use router::{
    rollout_teacher_forced, router_trajectory, train_router, RouterTraining, TeacherRollout, TrajectoryOutcome,
    TrajectorySettings,
};
pub use surrogate::{train_deeponet, DeepOnetTraining};

/// Optimization and curriculum settings shared by both trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Samples (surrogate) or trajectories (router) per update. Defaults to
    /// 128 for the surrogate and 32 for the router.
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden-layer activation of the surrogate.
    pub activation: Activation,
    pub ss_start: f64,
    pub gamma_tf: f64,
    pub ss_end: f64,
    /// Warm-up epochs for both schedules.
    pub e_w: usize,
    /// Initial truncation window; defaults to `max(1, T_max/10)`.
    pub w_start: Option<usize>,
    pub gamma_bptt: f64,
    pub f_bptt: usize,
    /// Divide each step's costs by their sum, so every step's weights sum to
    /// `K − 1` whatever the error scale and the per-step argmin is unchanged.
    pub normalize_costs: bool,
    /// Score validation trajectories without teacher forcing instead of
    /// using the epoch's teacher-forcing probability.
    pub validate_free_running: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.005,
            clip_norm: 1.0,
            batch_size: None,
            epochs: 100,
            seed: 0,
            activation: Activation::Tanh,
            ss_start: 1.0,
            gamma_tf: 0.95,
            ss_end: 0.0,
            e_w: 10,
            w_start: None,
            gamma_bptt: 1.25,
            f_bptt: 4,
            normalize_costs: true,
            validate_free_running: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.clip_norm > 0.0) {
            return bad(format!(
                "lr {}, weight_decay {}, clip_norm {} must be non-negative (clip > 0)",
                self.lr, self.weight_decay, self.clip_norm
            ));
        }
        if !(0.0 <= self.ss_end && self.ss_end <= self.ss_start && self.ss_start <= 1.0) {
            return bad(format!("need 0 <= ss_end <= ss_start <= 1, got {} / {}", self.ss_end, self.ss_start));
        }
        if !(self.gamma_tf > 0.0 && self.gamma_tf < 1.0) {
            return bad(format!("gamma_tf {} outside (0, 1)", self.gamma_tf));
        }
        if !(self.gamma_bptt > 1.0) {
            return bad(format!("gamma_bptt {} must exceed 1", self.gamma_bptt));
        }
        if self.f_bptt == 0 || self.w_start == Some(0) || self.batch_size == Some(0) {
            return bad("f_bptt, w_start and batch_size must be >= 1".into());
        }
        Ok(())
    }

    pub fn w_start_for(&self, t_max: usize) -> usize {
        self.w_start.unwrap_or((t_max / 10).max(1))
    }
}

/// Teacher-forcing probability at epoch `e` (epochs count from 1).
pub fn teacher_prob(cfg: &TrainConfig, e: usize) -> f64 {
    if e <= cfg.e_w {
        cfg.ss_start
    } else {
        (cfg.ss_start * cfg.gamma_tf.powi((e - cfg.e_w) as i32)).max(cfg.ss_end)
    }
}

/// Truncation window at epoch `e`, floored to whole steps and capped at
/// `t_max`.
pub fn bptt_window(cfg: &TrainConfig, e: usize, t_max: usize) -> usize {
    let w0 = cfg.w_start_for(t_max);
    if e <= cfg.e_w {
        return w0.min(t_max.max(1));
    }
    let growth = cfg.gamma_bptt.powi(((e - cfg.e_w) / cfg.f_bptt) as i32);
    let w = (w0 as f64 * growth).floor();
    if w >= t_max as f64 {
        t_max.max(1)
    } else {
        w as usize
    }
}

/// Schedule values in effect for one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleState {
    pub epoch: usize,
    pub p_tf: f64,
    pub w_bptt: usize,
}

impl ScheduleState {
    pub fn at(cfg: &TrainConfig, epoch: usize, t_max: usize) -> Self {
        Self { epoch, p_tf: teacher_prob(cfg, epoch), w_bptt: bptt_window(cfg, epoch, t_max) }
    }
}

/// One line of a training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub p_tf: Option<f64>,
    pub w_bptt: Option<usize>,
}

/// CSV with header `epoch,train_loss,val_loss,p_tf,w_bptt`; schedule
/// columns are empty for surrogate training.
pub fn epoch_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,p_tf,w_bptt\n");
    for l in log {
        let p = l.p_tf.map(|v| v.to_string()).unwrap_or_default();
        let w = l.w_bptt.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", l.epoch, l.train_loss, l.val_loss, p, w);
    }
    out
}
