//! Adam training with per-epoch held-out model selection.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetManifest, Normalization};
use super::input::InputTensor;
use super::model::{forward, loss_and_gradient, RegressorParams, OUTPUTS, PARAM_COUNT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // ~2000 samples over 30 epochs need smaller batches and a larger
        // step than the full-scale setup
        Self { batch_size: 16, learning_rate: 2e-3, epochs: 30, ..Self::paper() }
    }
}

impl TrainConfig {
    /// Full-scale setup: batch 64, lr 5e-4, Adam, 200 epochs.
    pub fn paper() -> Self {
        Self { batch_size: 64, learning_rate: 5e-4, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8, epochs: 200, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let betas_ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || self.epochs == 0 || !betas_ok || !(self.adam_eps > 0.0) {
            return Err(Error::Parameter(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// Inputs with normalized targets, held in memory.
#[derive(Debug, Clone)]
pub struct LoadedSet {
    pub inputs: Vec<InputTensor>,
    pub targets: Vec<[f64; OUTPUTS]>,
}

impl LoadedSet {
    pub fn load(manifest: &DatasetManifest, norm: &Normalization) -> Result<Self> {
        let inputs = manifest.load_inputs()?;
        let targets = manifest.samples.iter().map(|s| norm.normalize(&s.wrench)).collect();
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean summed absolute error per training sample.
    pub train_loss: f64,
    /// Mean normalized absolute error per component on the held-out set.
    pub heldout_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RegressorParams,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub curve: Vec<EpochStats>,
}

/// Mean per-component normalized absolute error.
pub fn mean_normalized_mae(params: &RegressorParams, set: &LoadedSet) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in set.inputs.iter().zip(&set.targets) {
        let y = forward(params, x)?;
        total += y.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / (set.len() * OUTPUTS) as f64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
}

/// Trains from the seeded initialization, reshuffling every epoch, and
/// keeps the parameters of the epoch with the lowest held-out error.
pub fn train_sets(train: &LoadedSet, heldout: &LoadedSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || heldout.is_empty() {
        return Err(Error::EmptyDataset("training and held-out sets must be non-empty".into()));
    }
    let mut params = RegressorParams::init(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam { m: vec![0.0; PARAM_COUNT], v: vec![0.0; PARAM_COUNT], t: 0 };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, RegressorParams)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&train.inputs[i], train.targets[i])).collect();
            let (loss, grad) = match loss_and_gradient(&params, &batch) {
                Ok(r) => r,
                Err(Error::Numeric(_)) => return Err(Error::Divergence { epoch, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            epoch_loss += loss;
            adam.step(cfg, params.values_mut(), &grad);
            if params.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
        }
        let heldout_mae = match mean_normalized_mae(&params, heldout) {
            Ok(v) => v,
            Err(Error::Numeric(_)) => return Err(Error::Divergence { epoch, loss: epoch_loss }),
            Err(e) => return Err(e),
        };
        curve.push(EpochStats { epoch, train_loss: epoch_loss / train.len() as f64, heldout_mae });
        if best.as_ref().is_none_or(|(b, _, _)| heldout_mae < *b) {
            best = Some((heldout_mae, epoch, params.clone()));
        }
    }
    let (_, selected_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome { params, selected_epoch, curve })
}

/// Loads both manifests with the training manifest's normalization and
/// trains.
pub fn train(train: &DatasetManifest, cfg: &TrainConfig, heldout: &DatasetManifest) -> Result<TrainOutcome> {
    let norm = train.normalization;
    train_sets(&LoadedSet::load(train, &norm)?, &LoadedSet::load(heldout, &norm)?, cfg)
}

/// `epoch,train_loss,heldout_mae` rows.
pub fn write_loss_curve(mut w: impl Write, curve: &[EpochStats]) -> Result<()> {
    writeln!(w, "epoch,train_loss,heldout_mae")?;
    for s in curve {
        writeln!(w, "{},{:.9},{:.9}", s.epoch, s.train_loss, s.heldout_mae)?;
    }
    Ok(())
}
