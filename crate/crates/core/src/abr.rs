//! Baseline bitrate selection: BOLA, rate-based, and model-predictive control.

use serde::{Deserialize, Serialize};

use crate::emulator::{BitratePolicy, ChunkObservation, QoeParams, LEVELS};
use crate::error::{Error, Result};
use crate::predictor::harmonic_mean;

/// Largest MPC lookahead accepted (6^5 sequences).
pub const MAX_HORIZON: usize = 5;
pub const DEFAULT_HORIZON: usize = 5;
/// Chunks of history used for throughput estimates and prediction errors.
pub const ESTIMATE_WINDOW: usize = 5;

/// The QoE weights used throughout: mu = 4.3, identity quality map.
pub fn qoe_params() -> QoeParams {
    QoeParams::default()
}

/// Quality map applied to bitrates inside QoE terms.
pub fn quality(bitrate_mbps: f64) -> f64 {
    bitrate_mbps
}

/// Everything a selector may look at before a download.
#[derive(Debug, Clone, PartialEq)]
pub struct AbrContext {
    pub buffer_level: f64,
    pub buffer_cap: f64,
    pub chunk_duration: f64,
    pub last_level: Option<usize>,
    /// Oldest first.
    pub last_throughputs: Vec<f64>,
    pub predicted_throughput: Option<f64>,
    pub bitrates: [f64; LEVELS],
    /// Sizes of the next chunks (the first is the one being chosen), Mbit.
    pub upcoming_sizes: Vec<[f64; LEVELS]>,
    pub horizon: usize,
}

impl AbrContext {
    pub fn from_observation(obs: &ChunkObservation, horizon: usize) -> Self {
        AbrContext {
            buffer_level: obs.buffer_level,
            buffer_cap: obs.buffer_cap,
            chunk_duration: obs.chunk_duration,
            last_level: obs.last_level,
            last_throughputs: obs.throughputs.clone(),
            predicted_throughput: None,
            bitrates: obs.bitrates,
            upcoming_sizes: obs.upcoming_sizes.clone(),
            horizon,
        }
    }

    /// Harmonic mean of the last `ESTIMATE_WINDOW` throughputs.
    pub fn throughput_estimate(&self) -> f64 {
        let n = self.last_throughputs.len();
        harmonic_mean(&self.last_throughputs[n.saturating_sub(ESTIMATE_WINDOW)..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BolaParams {
    /// Control gain, seconds. `None` derives it from the buffer cap.
    pub v: Option<f64>,
    pub gamma_p: f64,
}

impl Default for BolaParams {
    fn default() -> Self {
        BolaParams { v: None, gamma_p: 5.0 }
    }
}

/// Per-level BOLA objective values.
pub fn bola_objectives(ctx: &AbrContext, params: &BolaParams) -> [f64; LEVELS] {
    let sizes = &ctx.upcoming_sizes[0];
    let s_min = sizes[0];
    let u: [f64; LEVELS] = std::array::from_fn(|m| (sizes[m] / s_min).ln());
    let v = params
        .v
        .unwrap_or_else(|| ((ctx.buffer_cap - ctx.chunk_duration) / (u[LEVELS - 1] + params.gamma_p)).max(1e-9));
    std::array::from_fn(|m| (v * (u[m] + params.gamma_p) - ctx.buffer_level) / sizes[m])
}

/// Level maximizing the BOLA objective; ties go to the higher level.
pub fn bola_select(ctx: &AbrContext, params: &BolaParams) -> usize {
    let obj = bola_objectives(ctx, params);
    let mut best = 0;
    for m in 1..LEVELS {
        if obj[m] >= obj[best] {
            best = m;
        }
    }
    best
}

/// Highest level whose bitrate fits under the harmonic-mean estimate.
pub fn rate_based_select(ctx: &AbrContext) -> usize {
    let est = ctx.throughput_estimate();
    (0..LEVELS).rev().find(|&m| ctx.bitrates[m] <= est).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MpcVariant {
    Fast,
    Robust,
}

struct Search<'a> {
    ctx: &'a AbrContext,
    throughput: f64,
    mu: f64,
    h: usize,
    r_max: f64,
    best: f64,
    best_first: usize,
    seq: [usize; MAX_HORIZON],
}

impl Search<'_> {
    fn dfs(&mut self, depth: usize, buffer: f64, prev: Option<f64>, score: f64) {
        if depth == self.h {
            if score > self.best {
                self.best = score;
                self.best_first = self.seq[0];
            }
            return;
        }
        // bitrate terms are bounded by r_max and penalties are non-negative
        let bound = score + (self.h - depth) as f64 * self.r_max;
        if bound < self.best - 1e-9 * (1.0 + self.best.abs()) {
            return;
        }
        let l = self.ctx.chunk_duration;
        let ready = buffer.min((self.ctx.buffer_cap - l).max(0.0));
        for m in 0..LEVELS {
            let size = self.ctx.upcoming_sizes[depth][m];
            let d = size / self.throughput;
            let rebuffer = (d - ready).max(0.0);
            let next = (ready - d).max(0.0) + l;
            let r = quality(self.ctx.bitrates[m]);
            let switch = prev.map_or(0.0, |p| (r - p).abs());
            self.seq[depth] = m;
            self.dfs(depth + 1, next, Some(r), score + (r - self.mu * rebuffer - switch));
        }
    }
}

/// First level of the best level sequence over the horizon. The predicted
/// throughput defaults to the harmonic-mean estimate; `discount` divides it
/// (1 for plain MPC).
pub fn mpc_select_with(ctx: &AbrContext, qoe: QoeParams, discount: f64) -> Result<usize> {
    if ctx.horizon == 0 || ctx.horizon > MAX_HORIZON {
        return Err(Error::HorizonTooLarge(ctx.horizon));
    }
    let h = ctx.horizon.min(ctx.upcoming_sizes.len());
    if h == 0 {
        return Err(Error::Invalid("no upcoming chunks to plan for".into()));
    }
    let predicted = ctx.predicted_throughput.unwrap_or_else(|| ctx.throughput_estimate());
    let throughput = (predicted / discount.max(1.0)).max(1e-9);
    let mut search = Search {
        ctx,
        throughput,
        mu: qoe.mu,
        h,
        r_max: quality(ctx.bitrates[LEVELS - 1]),
        best: f64::NEG_INFINITY,
        best_first: 0,
        seq: [0; MAX_HORIZON],
    };
    let prev = ctx.last_level.map(|k| quality(ctx.bitrates[k]));
    search.dfs(0, ctx.buffer_level, prev, 0.0);
    Ok(search.best_first)
}

/// `recent_errors` are relative prediction errors of past chunks (Robust only).
pub fn mpc_select(ctx: &AbrContext, variant: MpcVariant, qoe: QoeParams, recent_errors: &[f64]) -> Result<usize> {
    let discount = match variant {
        MpcVariant::Fast => 1.0,
        MpcVariant::Robust => {
            let n = recent_errors.len();
            1.0 + recent_errors[n.saturating_sub(ESTIMATE_WINDOW)..].iter().fold(0.0f64, |a, e| a.max(*e))
        }
    };
    mpc_select_with(ctx, qoe, discount)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbrKind {
    Bola,
    RateBased,
    FastMpc,
    RobustMpc,
    Rl,
}

impl AbrKind {
    pub const BASELINES: [AbrKind; 4] = [AbrKind::Bola, AbrKind::RateBased, AbrKind::FastMpc, AbrKind::RobustMpc];

    pub fn name(self) -> &'static str {
        match self {
            AbrKind::Bola => "bola",
            AbrKind::RateBased => "rb",
            AbrKind::FastMpc => "fastmpc",
            AbrKind::RobustMpc => "robustmpc",
            AbrKind::Rl => "rl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [AbrKind::Bola, AbrKind::RateBased, AbrKind::FastMpc, AbrKind::RobustMpc, AbrKind::Rl]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Bola {
    pub params: BolaParams,
}

impl BitratePolicy for Bola {
    fn name(&self) -> &str {
        "bola"
    }

    fn select_level(&mut self, obs: &ChunkObservation) -> usize {
        bola_select(&AbrContext::from_observation(obs, 1), &self.params)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RateBased;

impl BitratePolicy for RateBased {
    fn name(&self) -> &str {
        "rb"
    }

    fn select_level(&mut self, obs: &ChunkObservation) -> usize {
        if obs.throughputs.is_empty() {
            return 0;
        }
        rate_based_select(&AbrContext::from_observation(obs, 1))
    }
}

/// Stateful MPC: remembers its own forecasts to measure prediction error.
#[derive(Debug, Clone)]
pub struct Mpc {
    pub variant: MpcVariant,
    pub horizon: usize,
    pub qoe: QoeParams,
    pending: Option<f64>,
    errors: Vec<f64>,
}

impl Mpc {
    pub fn new(variant: MpcVariant, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(Error::HorizonTooLarge(horizon));
        }
        Ok(Mpc { variant, horizon, qoe: qoe_params(), pending: None, errors: Vec::new() })
    }
}

impl BitratePolicy for Mpc {
    fn name(&self) -> &str {
        match self.variant {
            MpcVariant::Fast => "fastmpc",
            MpcVariant::Robust => "robustmpc",
        }
    }

    fn reset(&mut self) {
        self.pending = None;
        self.errors.clear();
    }

    fn select_level(&mut self, obs: &ChunkObservation) -> usize {
        if let (Some(p), Some(actual)) = (self.pending.take(), obs.throughputs.last()) {
            if *actual > 0.0 {
                self.errors.push((p - actual).abs() / actual);
                if self.errors.len() > ESTIMATE_WINDOW {
                    self.errors.remove(0);
                }
            }
        }
        if obs.throughputs.is_empty() {
            return 0;
        }
        let ctx = AbrContext::from_observation(obs, self.horizon);
        self.pending = Some(ctx.throughput_estimate());
        mpc_select(&ctx, self.variant, self.qoe, &self.errors).unwrap_or(0)
    }
}

/// Boxed baseline policy by kind. `Rl` is not a baseline and is refused.
pub fn baseline_policy(kind: AbrKind, horizon: usize) -> Result<Box<dyn BitratePolicy + Send>> {
    Ok(match kind {
        AbrKind::Bola => Box::new(Bola::default()),
        AbrKind::RateBased => Box::new(RateBased),
        AbrKind::FastMpc => Box::new(Mpc::new(MpcVariant::Fast, horizon)?),
        AbrKind::RobustMpc => Box::new(Mpc::new(MpcVariant::Robust, horizon)?),
        AbrKind::Rl => return Err(Error::Invalid("the learned policy needs a checkpoint".into())),
    })
}
