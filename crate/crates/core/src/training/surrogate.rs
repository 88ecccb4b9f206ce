use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grf::Dataset;
use crate::neural::{clip_global_norm, AdamW, DeepOnet, DeepOnetArch, Model, ModelCheckpoint, Parameterized};

use super::{EpochLog, TrainConfig};

pub struct DeepOnetTraining {
    /// Parameters at the epoch with the lowest validation loss.
    pub best: ModelCheckpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl DeepOnetTraining {
    pub fn model(&self) -> DeepOnet {
        self.best.clone().into_deeponet().expect("surrogate checkpoint")
    }
}

fn rms<'a>(fields: impl Iterator<Item = &'a [f64]>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in fields {
        s += v.iter().map(|x| x * x).sum::<f64>();
        n += v.len();
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Mean over samples and grid points of the squared prediction error.
pub(crate) fn dataset_mse(model: &DeepOnet, ds: &Dataset, trunk: &[f64]) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let len = ds.grid.len();
    let mut total = 0.0;
    for chunk in ds.samples.chunks(256) {
        let x: Vec<f64> = chunk.iter().flat_map(|s| s.f.values().iter().copied()).collect();
        let pred = model.forward_with_trunk(&x, chunk.len(), trunk)?;
        for (p, s) in pred.chunks_exact(len).zip(chunk) {
            total += p.iter().zip(s.u.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    Ok(total / (ds.len() * len) as f64 / (model.out_scale * model.out_scale))
}

/// Fits `f ↦ u` by minibatch AdamW on the mean-squared grid error and keeps
/// the parameters with the best validation loss (training loss when the
/// validation set is empty).
///
/// The hidden activation is taken from `cfg`. The network's input and
/// output scales are fixed beforehand to the reciprocal RMS of the training
/// inputs and the RMS of the targets. Losses are measured in units of the
/// target RMS, so predicting zero scores about 1; raw errors of typical
/// solutions are far below Adam's epsilon.
pub fn train_deeponet(
    train: &Dataset,
    val: &Dataset,
    arch: DeepOnetArch,
    cfg: &TrainConfig,
) -> Result<DeepOnetTraining> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let grid = train.grid;
    let len = grid.len();
    if arch.input_len != len || arch.coord_dim != grid.dim() {
        return Err(Error::GridMismatch { expected: format!("{}-point grid", arch.input_len), got: grid.to_string() });
    }
    let arch = DeepOnetArch { activation: cfg.activation, ..arch };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = DeepOnet::init(arch, &mut rng)?;
    let rf = rms(train.samples.iter().map(|s| s.f.values()));
    let ru = rms(train.samples.iter().map(|s| s.u.values()));
    model.in_scale = if rf > 0.0 { 1.0 / rf } else { 1.0 };
    model.out_scale = if ru > 0.0 { ru } else { 1.0 };
    let mut opt = AdamW::for_model(&model, cfg.lr, cfg.weight_decay);
    let coords = grid.coordinates();
    let batch_size = cfg.batch_size.unwrap_or(128);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelCheckpoint)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let b = batch.len();
            let x: Vec<f64> = batch.iter().flat_map(|&i| train.samples[i].f.values().iter().copied()).collect();
            let cache = model.forward_cached(&x, b, &coords)?;
            let scale = 1.0 / ((b * len) as f64 * model.out_scale * model.out_scale);
            let mut dy = Vec::with_capacity(b * len);
            for (p, &i) in cache.output().chunks_exact(len).zip(batch) {
                for (a, t) in p.iter().zip(train.samples[i].u.values()) {
                    let d = a - t;
                    epoch_loss += d * d;
                    dy.push(2.0 * d * scale);
                }
            }
            let mut grads = model.zero_grads();
            model.backward(&cache, &dy, &mut grads)?;
            clip_global_norm(&mut grads, cfg.clip_norm);
            opt.update(model.parameters_mut(), &grads)?;
        }
        let train_loss = epoch_loss / ((train.len() * len) as f64 * model.out_scale * model.out_scale);
        let val_loss =
            if val.is_empty() { train_loss } else { dataset_mse(&model, val, &model.trunk_features(&coords)?)? };
        log.push(EpochLog { epoch, train_loss, val_loss, p_tf: None, w_bptt: None });
        if best.as_ref().is_none_or(|(v, _, _)| val_loss < *v) {
            let ck = ModelCheckpoint { model: Model::DeepOnet(model.clone()), optimizer: Some(opt.clone()) };
            best = Some((val_loss, epoch, ck));
        }
    }
    let (best, best_epoch) = match best {
        Some((_, e, ck)) => (ck, e),
        None => (ModelCheckpoint { model: Model::DeepOnet(model), optimizer: Some(opt) }, 0),
    };
    Ok(DeepOnetTraining { best, best_epoch, log })
}
