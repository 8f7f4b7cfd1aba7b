//! Episodes of the cascade against the emulator, with per-slot QoE and
//! energy, and the paired static-cap BOLA replay that prices each slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ActionMode, PolicyModel, RewardNorm};
use super::state::{apply_buffer_action, bitrate_state, buffer_delta, buffer_state, energy_term, CapBounds, BUFFER_ACTIONS};
use crate::abr::Bola;
use crate::emulator::{
    chunk_qoe, BitratePolicy, BufferPolicy, ChunkObservation, Event, Forecaster, QoeParams, Session, SessionConfig, SessionLog,
    SlotObservation, VideoManifest, LEVELS,
};
use crate::energy::{derive_rrc_timeline, derive_timeline, window_energy, RrcConfig};
use crate::error::{Error, Result};
use crate::trace::ThroughputTrace;

/// Environment settings shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub session: SessionConfig,
    pub bounds: CapBounds,
    pub rrc: RrcConfig,
    pub qoe: QoeParams,
    /// Cap used by the paired baseline replay.
    pub baseline_cap: f64,
    pub w1: f64,
    pub w2: f64,
    pub reward_abs: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let session = SessionConfig::default();
        EnvConfig {
            session,
            bounds: CapBounds::default(),
            rrc: RrcConfig::default(),
            qoe: QoeParams::default(),
            baseline_cap: session.initial_cap,
            w1: 1.0,
            w2: 1.0,
            reward_abs: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub start: f64,
    pub end: f64,
    /// Sum of per-chunk QoE contributions of chunks requested in the slot.
    pub qoe: f64,
    pub e_policy: f64,
    /// Energy of the baseline replay over the same window (0 when not paired).
    pub e_baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub log: SessionLog,
    pub slots: Vec<SlotOutcome>,
}

impl Episode {
    /// Raw (unnormalized) energy term per slot.
    pub fn energy_terms(&self, absolute: bool) -> Vec<f64> {
        self.slots.iter().map(|s| energy_term(s.e_policy, s.e_baseline, absolute)).collect()
    }

    /// Per-slot buffer rewards under frozen normalization statistics.
    pub fn rewards(&self, norm: &RewardNorm, env: &EnvConfig) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| {
                let q = norm.qoe.z(s.qoe);
                let e = norm.energy.z(energy_term(s.e_policy, s.e_baseline, env.reward_abs));
                env.w1 * q + env.w2 * e
            })
            .collect()
    }

    pub fn total_reward(&self, norm: &RewardNorm, env: &EnvConfig) -> f64 {
        self.rewards(norm, env).iter().sum()
    }
}

/// Play one session. With `paired`, every slot is also replayed from its
/// starting state by static-cap BOLA to obtain the baseline energy.
pub fn run_episode(
    manifest: &VideoManifest,
    trace: &ThroughputTrace,
    bitrate: &mut dyn BitratePolicy,
    mut buffer: Option<&mut dyn BufferPolicy>,
    forecaster: Option<&dyn Forecaster>,
    env: &EnvConfig,
    paired: bool,
) -> Result<Episode> {
    let mut session = Session::new(manifest, trace, forecaster, &env.session)?;
    bitrate.reset();
    if let Some(b) = buffer.as_deref_mut() {
        b.reset();
    }
    let mut snapshots = Vec::new();
    loop {
        match session.poll() {
            Event::Done => break,
            Event::Slot(obs) => {
                if paired {
                    snapshots.push(session.clone());
                }
                if let Some(b) = buffer.as_deref_mut() {
                    session.set_cap(b.select_cap(&obs));
                }
            }
            Event::Chunk(obs) => {
                let level = bitrate.select_level(&obs).min(LEVELS - 1);
                match session.download(level) {
                    Ok(_) => {}
                    Err(Error::TraceExhausted { .. }) => break,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let log = session.finish();
    let timeline = derive_rrc_timeline(&log, &env.rrc)?;
    let mut slots = Vec::with_capacity(log.slots.len());
    let mut prev_bitrate: Option<f64> = None;
    let mut per_slot_qoe = vec![0.0; log.slots.len()];
    for c in &log.chunks {
        per_slot_qoe[c.slot] += chunk_qoe(prev_bitrate, c.bitrate_mbps, c.rebuffer, env.qoe);
        prev_bitrate = Some(c.bitrate_mbps);
    }
    for k in 0..log.slots.len() {
        let (start, end) = log.slot_window(k).expect("slot exists");
        let e_policy = window_energy(&timeline, &env.rrc, start, end);
        let e_baseline = match snapshots.get(k) {
            Some(snap) => replay_baseline(snap.clone(), start, end, env)?,
            None => 0.0,
        };
        slots.push(SlotOutcome { start, end, qoe: per_slot_qoe[k], e_policy, e_baseline });
    }
    Ok(Episode { log, slots })
}

fn replay_baseline(mut s: Session<'_>, start: f64, end: f64, env: &EnvConfig) -> Result<f64> {
    let mut bola = Bola::default();
    s.set_cap(env.baseline_cap);
    loop {
        match s.poll() {
            Event::Done => break,
            Event::Slot(obs) => {
                if obs.wall_clock > end + 1e-9 {
                    break;
                }
                s.set_cap(env.baseline_cap);
            }
            Event::Chunk(obs) => {
                if obs.wall_clock > end + 1e-9 {
                    break;
                }
                let level = bola.select_level(&obs);
                if s.download(level).is_err() {
                    break;
                }
            }
        }
    }
    let intervals: Vec<(f64, f64)> = s.chunks().iter().map(|c| (c.start, c.start + c.download_time)).collect();
    let last = intervals.last().map_or(0.0, |iv| iv.1);
    let tl = derive_timeline(&intervals, 0.0, end.max(last), &env.rrc)?;
    Ok(window_energy(&tl, &env.rrc, start, end))
}

/// (state, action) pairs a learned policy took during an episode.
pub type Trajectory = Vec<(Vec<f64>, usize)>;

/// Learned bitrate engine as a [`BitratePolicy`].
pub struct RlBitrate<'m> {
    pub model: &'m PolicyModel,
    pub mode: ActionMode,
    pub rng: ChaCha8Rng,
    pub record: Option<Trajectory>,
}

impl<'m> RlBitrate<'m> {
    pub fn new(model: &'m PolicyModel, mode: ActionMode, seed: u64) -> Self {
        RlBitrate { model, mode, rng: ChaCha8Rng::seed_from_u64(seed), record: None }
    }
}

impl BitratePolicy for RlBitrate<'_> {
    fn name(&self) -> &str {
        "rl"
    }

    fn select_level(&mut self, obs: &ChunkObservation) -> usize {
        let x = bitrate_state(obs);
        let a = self.model.act(&x, self.mode, &mut self.rng).unwrap_or(0);
        if let Some(r) = self.record.as_mut() {
            r.push((x, a));
        }
        a
    }
}

/// Learned buffer engine as a [`BufferPolicy`].
pub struct RlBuffer<'m> {
    pub model: &'m PolicyModel,
    pub mode: ActionMode,
    pub rng: ChaCha8Rng,
    pub bounds: CapBounds,
    pub initial_cap: f64,
    pub record: Option<Trajectory>,
}

impl<'m> RlBuffer<'m> {
    pub fn new(model: &'m PolicyModel, mode: ActionMode, env: &EnvConfig, seed: u64) -> Self {
        RlBuffer {
            model,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bounds: env.bounds,
            initial_cap: env.session.initial_cap,
            record: None,
        }
    }
}

impl BufferPolicy for RlBuffer<'_> {
    fn name(&self) -> &str {
        "rl"
    }

    fn select_cap(&mut self, obs: &SlotObservation) -> f64 {
        let x = buffer_state(obs, self.initial_cap);
        let a = self.model.act(&x, self.mode, &mut self.rng).unwrap_or(2);
        if let Some(r) = self.record.as_mut() {
            r.push((x, a));
        }
        apply_buffer_action(obs.buffer_cap, buffer_delta(a), obs.chunk_duration, self.bounds)
    }
}

/// Uniformly random ladder index.
pub struct RandomBitrate(pub ChaCha8Rng);

impl BitratePolicy for RandomBitrate {
    fn name(&self) -> &str {
        "random"
    }

    fn select_level(&mut self, _: &ChunkObservation) -> usize {
        self.0.gen_range(0..LEVELS)
    }
}

/// Uniformly random cap move.
pub struct RandomBuffer {
    pub rng: ChaCha8Rng,
    pub bounds: CapBounds,
}

impl BufferPolicy for RandomBuffer {
    fn name(&self) -> &str {
        "random"
    }

    fn select_cap(&mut self, obs: &SlotObservation) -> f64 {
        let a = self.rng.gen_range(0..BUFFER_ACTIONS.len());
        apply_buffer_action(obs.buffer_cap, buffer_delta(a), obs.chunk_duration, self.bounds)
    }
}
