use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::LstmModel;
use crate::error::{Error, Result};
use crate::optim::{clip_grad_norm, Optimizer, OptimizerKind};
use crate::trace::SampleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub clip_norm: f64,
    /// Stop after this many epochs without a validation improvement (0 disables).
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 2e-3,
            optimizer: OptimizerKind::adam(),
            clip_norm: 5.0,
            early_stop_patience: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Invalid("train config values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FineTuneStrategy {
    WeightTransfer,
    LastLayerOnly,
    AllLayers,
}

impl FineTuneStrategy {
    pub const ALL: [FineTuneStrategy; 3] =
        [FineTuneStrategy::WeightTransfer, FineTuneStrategy::LastLayerOnly, FineTuneStrategy::AllLayers];

    pub fn name(self) -> &'static str {
        match self {
            FineTuneStrategy::WeightTransfer => "weight-transfer",
            FineTuneStrategy::LastLayerOnly => "last-layer",
            FineTuneStrategy::AllLayers => "all-layers",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochLoss>,
    pub best_epoch: Option<usize>,
    pub best_val_mse: f64,
}

impl TrainReport {
    /// Running minimum of validation loss per epoch.
    pub fn best_envelope(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.curve
            .iter()
            .map(|e| {
                best = best.min(e.val_mse);
                best
            })
            .collect()
    }
}

pub fn mse(model: &LstmModel, samples: &SampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for k in 0..samples.len() {
        let e = model.forward_normalized(&samples.sequence(k))? - samples.labels[k];
        acc += e * e;
    }
    Ok(acc / samples.len() as f64)
}

/// Mini-batch training on `train`, keeping the parameters with the lowest
/// validation MSE. With an empty validation set the training loss selects.
pub(crate) fn fit(
    model: &mut LstmModel,
    train: &SampleSet,
    val: &SampleSet,
    cfg: &TrainConfig,
    mask: Option<&[bool]>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.n_params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; model.n_params()];
    let sequences: Vec<Vec<f64>> = (0..train.len()).map(|k| train.sequence(k)).collect();

    let mut best_params = model.params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = None;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &k in batch {
                train_loss += model.accumulate_gradient(&sequences[k], train.labels[k], Some(&mut rng), &mut grad)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_grad_norm(&mut grad, cfg.clip_norm);
            opt.step(&mut model.params, &grad, mask);
        }
        let train_mse = train_loss / train.len() as f64;
        let val_mse = if val.is_empty() { mse(model, train)? } else { mse(model, val)? };
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        curve.push(EpochLoss { epoch, train_mse, val_mse });
        if val_mse < best_val {
            best_val = val_mse;
            best_params.copy_from_slice(&model.params);
            best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    model.params = best_params;
    Ok(TrainReport { curve, best_epoch, best_val_mse: best_val })
}

/// Train on normalized source samples with a chronological 80/20 train/validation split.
pub fn train_source(model: &mut LstmModel, samples: &SampleSet, cfg: &TrainConfig) -> Result<TrainReport> {
    let stats = samples
        .norm_stats
        .clone()
        .ok_or_else(|| Error::Invalid("source samples must be normalized".into()))?;
    let parts = samples.split(&[0.8, 0.2]);
    model.history = samples.history;
    model.norm_stats = Some(stats);
    fit(model, &parts[0], &parts[1], cfg, None)
}

#[derive(Debug, Clone)]
pub struct FineTuned {
    pub model: LstmModel,
    /// Parameter change relative to the source weights (θ_T = θ_S + Δθ).
    pub delta: Vec<f64>,
    pub report: Option<TrainReport>,
}

/// Adapt source weights to target samples (train + validation portion, already
/// normalized with the source stats). The last ninth is held out for
/// validation, which turns an 80% train+val share into a 72/8 split.
pub fn fine_tune(
    source: &LstmModel,
    target: &SampleSet,
    strategy: FineTuneStrategy,
    cfg: &TrainConfig,
) -> Result<FineTuned> {
    if target.history != source.history && source.history != 0 {
        return Err(Error::Dimension {
            expected: format!("H={}", source.history),
            actual: format!("H={}", target.history),
        });
    }
    let mut model = source.clone();
    let report = match strategy {
        FineTuneStrategy::WeightTransfer => None,
        FineTuneStrategy::LastLayerOnly | FineTuneStrategy::AllLayers => {
            let parts = target.split(&[8.0 / 9.0, 1.0 / 9.0]);
            let mask = (strategy == FineTuneStrategy::LastLayerOnly).then(|| model.head_mask());
            Some(fit(&mut model, &parts[0], &parts[1], cfg, mask.as_deref())?)
        }
    };
    let delta: Vec<f64> = model.params.iter().zip(&source.params).map(|(t, s)| t - s).collect();
    for ((p, s), d) in model.params.iter_mut().zip(&source.params).zip(&delta) {
        *p = s + d;
    }
    Ok(FineTuned { model, delta, report })
}
