//! Recurrent throughput predictor with transfer-learning fine-tuning,
//! moving-average baselines and goodness-of-fit scoring.

mod baseline;
mod lstm;
mod metrics;
mod train;

pub use baseline::{baseline_predict, harmonic_mean, BaselineKind, DEFAULT_EWMA_ALPHA, HARMONIC_EPSILON};
pub use lstm::LstmModel;
pub use metrics::{score, PredictionMetrics};
pub use train::{fine_tune, mse, train_source, EpochLoss, FineTuneStrategy, FineTuned, TrainConfig, TrainReport};

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::trace::{SampleSet, ThroughputTrace, FEATURE_COUNT};

/// Outcome of [`predict_window`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    /// Predicted mean throughput over the next window, Mbit/s.
    pub mbps: f64,
    /// True when history was too short and the harmonic-mean fallback was used.
    pub fallback: bool,
}

/// Forecast the mean throughput of the `horizon` steps starting at trace index `i`.
pub fn predict_window(model: &LstmModel, trace: &ThroughputTrace, i: usize) -> Result<Forecast> {
    let h = model.history;
    if h == 0 {
        return Err(Error::Invalid("model has no history length; train it first".into()));
    }
    if i > trace.len() {
        return Err(Error::OutOfBounds { index: i, len: trace.len() });
    }
    if i < h {
        return Ok(Forecast { mbps: harmonic_mean(&trace.throughput[..i]), fallback: true });
    }
    let mut x = Vec::with_capacity(h * FEATURE_COUNT);
    for f in &trace.features[i - h..i] {
        x.extend_from_slice(&f.to_array());
    }
    let y = model.predict(&x, &trace.throughput[i - h..i])?;
    let mbps = if y.is_finite() { y.max(0.0) } else { 0.0 };
    Ok(Forecast { mbps, fallback: false })
}

/// Denormalized predictions and actual labels for every sample in a normalized set.
pub fn evaluate(model: &LstmModel, samples: &SampleSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let stats = samples
        .norm_stats
        .as_ref()
        .ok_or_else(|| Error::Invalid("evaluation samples must be normalized".into()))?;
    let thr = stats.throughput();
    let mut pred = Vec::with_capacity(samples.len());
    let mut actual = Vec::with_capacity(samples.len());
    for k in 0..samples.len() {
        let y = model.forward_normalized(&samples.sequence(k))?;
        pred.push(thr.denormalize(y).max(0.0));
        actual.push(thr.denormalize(samples.labels[k]));
    }
    Ok((pred, actual))
}

/// Score a moving-average baseline on the raw throughput history of each sample.
pub fn evaluate_baseline(kind: BaselineKind, samples: &SampleSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = samples.norm_stats.as_ref().map(|s| *s.throughput());
    let denorm = |v: f64| t.map_or(v, |t| t.denormalize(v));
    let mut pred = Vec::with_capacity(samples.len());
    let mut actual = Vec::with_capacity(samples.len());
    for k in 0..samples.len() {
        let raw: Vec<f64> = samples.y_windows[k].iter().map(|v| denorm(*v)).collect();
        pred.push(baseline_predict(kind, &raw)?);
        actual.push(denorm(samples.labels[k]));
    }
    Ok((pred, actual))
}

impl crate::emulator::Forecaster for LstmModel {
    fn forecast(&self, trace: &ThroughputTrace, index: usize) -> f64 {
        predict_window(self, trace, index).map_or(0.0, |f| f.mbps)
    }
}

impl LstmModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new("lstm", self.layer_sizes());
        ckpt.dropout_rate = self.dropout_rate;
        ckpt.norm_stats = self.norm_stats.clone();
        ckpt.meta = serde_json::json!({ "history": self.history });
        for (l, span) in self.spans().iter().enumerate() {
            let width = span.input + span.hidden;
            ckpt.tensors.push(Tensor::new(
                format!("lstm{l}.weight"),
                vec![4 * span.hidden, width],
                self.params[span.weight..span.bias].to_vec(),
            ));
            ckpt.tensors.push(Tensor::new(
                format!("lstm{l}.bias"),
                vec![4 * span.hidden],
                self.params[span.bias..span.bias + 4 * span.hidden].to_vec(),
            ));
        }
        let (hw, hb) = self.head_offsets();
        ckpt.tensors.push(Tensor::new("head.weight", vec![hb - hw], self.params[hw..hb].to_vec()));
        ckpt.tensors.push(Tensor::new("head.bias", vec![1], vec![self.params[hb]]));
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind("lstm")?;
        let sizes = &ckpt.layer_sizes;
        if sizes.len() < 3 || sizes[sizes.len() - 1] != 1 {
            return Err(Error::Checkpoint(format!("bad layer_sizes {sizes:?}")));
        }
        let mut model = LstmModel::zeros(sizes[0], &sizes[1..sizes.len() - 1], ckpt.dropout_rate);
        model.norm_stats = ckpt.norm_stats.clone();
        model.history = ckpt.meta.get("history").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        let spans = model.spans();
        let (hw, hb) = model.head_offsets();
        let mut copy = |name: String, start: usize, len: usize| -> Result<()> {
            let t = ckpt.tensor(&name)?;
            if t.data.len() != len {
                return Err(Error::Checkpoint(format!("tensor `{name}` has {} values, expected {len}", t.data.len())));
            }
            model.params[start..start + len].copy_from_slice(&t.data);
            Ok(())
        };
        for (l, span) in spans.iter().enumerate() {
            copy(format!("lstm{l}.weight"), span.weight, span.bias - span.weight)?;
            copy(format!("lstm{l}.bias"), span.bias, 4 * span.hidden)?;
        }
        copy("head.weight".into(), hw, hb - hw)?;
        copy("head.bias".into(), hb, 1)?;
        Ok(model)
    }
}
