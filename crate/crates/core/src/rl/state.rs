//! Observation encodings, the buffer-cap action, and the buffer reward.

use serde::{Deserialize, Serialize};

use crate::emulator::{ChunkObservation, SlotObservation, LEVELS};

/// Cap moves in whole chunks: −2..=+2.
pub const BUFFER_ACTIONS: [i32; 5] = [-2, -1, 0, 1, 2];
pub const CAP_HISTORY: usize = 5;

/// Input scales, chosen so typical values land near [0, 1].
const THROUGHPUT_SCALE: f64 = 10.0;
const TIME_SCALE: f64 = 60.0;
const BITRATE_SCALE: f64 = 4.3;
const SIZE_SCALE: f64 = 40.0;
const DOWNLOAD_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for CapBounds {
    fn default() -> Self {
        CapBounds { min: 16.0, max: 96.0 }
    }
}

/// New cap after moving `x` chunks of `chunk_duration` seconds.
pub fn apply_buffer_action(cap: f64, x: i32, chunk_duration: f64, bounds: CapBounds) -> f64 {
    (cap + chunk_duration * x as f64).clamp(bounds.min, bounds.max)
}

/// Action index → chunk delta.
pub fn buffer_delta(action: usize) -> i32 {
    BUFFER_ACTIONS[action.min(BUFFER_ACTIONS.len() - 1)]
}

/// Slot-level reward: weighted QoE plus energy saved against the baseline.
/// The default counts only savings; `absolute` uses |e_baseline − e_policy|.
pub fn buffer_reward(qoe: f64, e_policy: f64, e_baseline: f64, w1: f64, w2: f64, absolute: bool) -> f64 {
    let saved = if absolute { (e_baseline - e_policy).abs() } else { (e_baseline - e_policy).max(0.0) };
    w1 * qoe + w2 * saved
}

/// Energy term of [`buffer_reward`] on its own.
pub fn energy_term(e_policy: f64, e_baseline: f64, absolute: bool) -> f64 {
    buffer_reward(0.0, e_policy, e_baseline, 0.0, 1.0, absolute)
}

/// Vector lengths and scalar count of the buffer-engine input.
pub fn buffer_layout() -> (Vec<usize>, usize) {
    (vec![CAP_HISTORY], 2)
}

/// [last 5 caps] ++ [forecast, buffer level].
pub fn buffer_state(obs: &SlotObservation, initial_cap: f64) -> Vec<f64> {
    let mut caps: Vec<f64> = obs.recent_caps.iter().rev().take(CAP_HISTORY).rev().cloned().collect();
    while caps.len() < CAP_HISTORY {
        caps.insert(0, initial_cap);
    }
    let mut x: Vec<f64> = caps.iter().map(|c| c / TIME_SCALE).collect();
    x.push(clean(obs.forecast / THROUGHPUT_SCALE));
    x.push(clean(obs.buffer_level.max(0.0) / TIME_SCALE));
    x
}

pub fn bitrate_layout() -> (Vec<usize>, usize) {
    (vec![LEVELS, LEVELS], 5)
}

/// [next sizes] ++ [ladder] ++ [cap, last throughput, last download time,
/// last bitrate, buffer level].
pub fn bitrate_state(obs: &ChunkObservation) -> Vec<f64> {
    let mut x: Vec<f64> = obs.next_sizes().iter().map(|s| s / SIZE_SCALE).collect();
    x.extend(obs.bitrates.iter().map(|b| b / BITRATE_SCALE));
    x.push(obs.buffer_cap / TIME_SCALE);
    x.push(clean(obs.throughputs.last().copied().unwrap_or(0.0) / THROUGHPUT_SCALE));
    x.push(clean(obs.download_times.last().copied().unwrap_or(0.0) / DOWNLOAD_SCALE));
    x.push(obs.last_level.map_or(0.0, |l| obs.bitrates[l] / BITRATE_SCALE));
    x.push(obs.buffer_level.max(0.0) / TIME_SCALE);
    x
}

/// Finite and bounded, so a zero-time download cannot blow up an input.
fn clean(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(0.0, 10.0)
    } else {
        10.0
    }
}
