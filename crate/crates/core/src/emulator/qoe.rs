use serde::{Deserialize, Serialize};

use super::log::SessionLog;
use crate::error::{Error, Result};

/// Stall penalty per second, equal to the top ladder bitrate.
pub const DEFAULT_REBUFFER_PENALTY: f64 = 4.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeParams {
    /// Penalty per second of rebuffering, in Mbit/s units.
    pub mu: f64,
}

impl Default for QoeParams {
    fn default() -> Self {
        QoeParams { mu: DEFAULT_REBUFFER_PENALTY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeBreakdown {
    pub qoe: f64,
    pub mean_bitrate: f64,
    /// mu × total stall / N
    pub rebuffer_penalty: f64,
    /// Mean absolute bitrate change between consecutive chunks.
    pub smoothness_penalty: f64,
    pub total_rebuffer: f64,
    pub rebuffer_events: usize,
    pub n_chunks: usize,
}

/// Session QoE: mean bitrate, minus mu × mean stall, minus the mean absolute
/// bitrate switch. A single chunk has no switching term.
pub fn qoe_breakdown(bitrates: &[f64], rebuffers: &[f64], params: QoeParams) -> Result<QoeBreakdown> {
    let n = bitrates.len();
    if n == 0 {
        return Err(Error::MalformedLog("QoE of an empty session".into()));
    }
    if rebuffers.len() != n {
        return Err(Error::MalformedLog(format!("{n} bitrates but {} stall entries", rebuffers.len())));
    }
    if bitrates.iter().chain(rebuffers).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::MalformedLog("bitrates and stalls must be finite and non-negative".into()));
    }
    let nf = n as f64;
    let mean_bitrate = bitrates.iter().sum::<f64>() / nf;
    let total_rebuffer: f64 = rebuffers.iter().sum();
    let rebuffer_penalty = params.mu * total_rebuffer / nf;
    let smoothness_penalty = if n > 1 {
        bitrates.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    Ok(QoeBreakdown {
        qoe: mean_bitrate - rebuffer_penalty - smoothness_penalty,
        mean_bitrate,
        rebuffer_penalty,
        smoothness_penalty,
        total_rebuffer,
        rebuffer_events: rebuffers.iter().filter(|r| **r > 0.0).count(),
        n_chunks: n,
    })
}

pub fn qoe_of_log(log: &SessionLog, params: QoeParams) -> Result<QoeBreakdown> {
    let bitrates: Vec<f64> = log.chunks.iter().map(|c| c.bitrate_mbps).collect();
    let rebuffers: Vec<f64> = log.chunks.iter().map(|c| c.rebuffer).collect();
    qoe_breakdown(&bitrates, &rebuffers, params)
}

/// Unnormalized per-chunk contribution: bitrate − mu·stall − |switch|.
pub fn chunk_qoe(prev_bitrate: Option<f64>, bitrate: f64, rebuffer: f64, params: QoeParams) -> f64 {
    bitrate - params.mu * rebuffer - prev_bitrate.map_or(0.0, |p| (bitrate - p).abs())
}
