use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub r2: f64,
    /// `None` when the predictions have zero variance.
    pub pearson: Option<f64>,
    pub mae: f64,
}

pub fn score(predictions: &[f64], actuals: &[f64]) -> Result<PredictionMetrics> {
    if predictions.len() != actuals.len() || actuals.is_empty() {
        return Err(Error::Dimension {
            expected: format!("{} predictions (non-empty)", actuals.len()),
            actual: format!("{}", predictions.len()),
        });
    }
    let n = actuals.len() as f64;
    let mean_a = actuals.iter().sum::<f64>() / n;
    let mean_p = predictions.iter().sum::<f64>() / n;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    let mut ss_p = 0.0;
    let mut cross = 0.0;
    let mut abs = 0.0;
    for (p, a) in predictions.iter().zip(actuals) {
        ss_tot += (a - mean_a) * (a - mean_a);
        ss_res += (a - p) * (a - p);
        ss_p += (p - mean_p) * (p - mean_p);
        cross += (a - mean_a) * (p - mean_p);
        abs += (a - p).abs();
    }
    if ss_tot == 0.0 {
        return Err(Error::Undefined("r2"));
    }
    let pearson = (ss_p > 0.0).then(|| (cross / (ss_tot.sqrt() * ss_p.sqrt())).clamp(-1.0, 1.0));
    Ok(PredictionMetrics { r2: 1.0 - ss_res / ss_tot, pearson, mae: abs / n })
}
