use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substitute for zero samples in the harmonic mean, Mbit/s.
pub const HARMONIC_EPSILON: f64 = 1e-6;

pub const DEFAULT_EWMA_ALPHA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BaselineKind {
    ArithmeticMa,
    /// Weight of the newest sample.
    Ewma { alpha: f64 },
    HarmonicMa,
}

pub fn baseline_predict(kind: BaselineKind, window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Invalid("baseline predictor needs a non-empty window".into()));
    }
    Ok(match kind {
        BaselineKind::ArithmeticMa => window.iter().sum::<f64>() / window.len() as f64,
        BaselineKind::Ewma { alpha } => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Invalid(format!("EWMA alpha must lie in (0, 1], got {alpha}")));
            }
            window[1..].iter().fold(window[0], |s, v| alpha * v + (1.0 - alpha) * s)
        }
        BaselineKind::HarmonicMa => harmonic_mean(window),
    })
}

/// Harmonic mean with zeros replaced by [`HARMONIC_EPSILON`]. Empty input gives 0.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let inv: f64 = values.iter().map(|v| 1.0 / v.max(HARMONIC_EPSILON)).sum();
    values.len() as f64 / inv
}
