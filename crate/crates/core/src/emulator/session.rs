use serde::{Deserialize, Serialize};

use super::download::{download_chunk, ChunkRecord, PlaybackState};
use super::log::{BufferSample, SessionLog, SlotRecord};
use super::manifest::{VideoManifest, LEVELS};
use crate::error::{Error, Result};
use crate::predictor::harmonic_mean;
use crate::trace::ThroughputTrace;

/// Number of past chunks exposed in observations.
pub const HISTORY: usize = 8;
/// Number of upcoming chunks whose sizes are exposed.
pub const LOOKAHEAD: usize = 5;

/// Throughput forecast for the next slot, from the trace samples seen so far.
pub trait Forecaster: Sync {
    /// Mean throughput expected over the samples starting at `index`, Mbit/s.
    fn forecast(&self, trace: &ThroughputTrace, index: usize) -> f64;
}

/// Harmonic mean of the last `history` trace samples.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicForecaster {
    pub history: usize,
}

impl Default for HarmonicForecaster {
    fn default() -> Self {
        HarmonicForecaster { history: 15 }
    }
}

impl Forecaster for HarmonicForecaster {
    fn forecast(&self, trace: &ThroughputTrace, index: usize) -> f64 {
        let end = index.min(trace.len());
        harmonic_mean(&trace.throughput[end.saturating_sub(self.history)..end])
    }
}

/// Context handed to a bitrate policy before each download.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkObservation {
    pub chunk: usize,
    pub n_chunks: usize,
    pub wall_clock: f64,
    pub buffer_level: f64,
    pub buffer_cap: f64,
    pub chunk_duration: f64,
    pub bitrates: [f64; LEVELS],
    /// Sizes of this chunk and up to `LOOKAHEAD - 1` following ones, Mbit.
    pub upcoming_sizes: Vec<[f64; LEVELS]>,
    pub last_level: Option<usize>,
    /// Oldest first, at most `HISTORY` entries.
    pub throughputs: Vec<f64>,
    pub download_times: Vec<f64>,
    /// Forecast made at the start of the current slot.
    pub slot_forecast: f64,
}

impl ChunkObservation {
    pub fn next_sizes(&self) -> &[f64; LEVELS] {
        &self.upcoming_sizes[0]
    }

    pub fn chunks_left(&self) -> usize {
        self.n_chunks - self.chunk
    }
}

/// Context handed to a buffer policy at each slot boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotObservation {
    pub slot: usize,
    pub wall_clock: f64,
    pub buffer_level: f64,
    pub buffer_cap: f64,
    pub chunk_duration: f64,
    pub chunks_left: usize,
    pub n_chunks: usize,
    pub last_bitrate: f64,
    pub throughputs: Vec<f64>,
    /// Caps of the previous slots, oldest first, at most `HISTORY`.
    pub recent_caps: Vec<f64>,
    pub forecast: f64,
    pub trace_index: usize,
}

pub trait BitratePolicy {
    fn name(&self) -> &str;
    /// Called before a new session.
    fn reset(&mut self) {}
    fn select_level(&mut self, obs: &ChunkObservation) -> usize;
}

pub trait BufferPolicy {
    fn name(&self) -> &str;
    fn reset(&mut self) {}
    /// New buffer cap, seconds.
    fn select_cap(&mut self, obs: &SlotObservation) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Seconds.
    pub initial_cap: f64,
    /// Decision slot length, seconds.
    pub slot_len: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { initial_cap: 32.0, slot_len: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// A slot boundary was crossed; the driver may call [`Session::set_cap`].
    Slot(SlotObservation),
    /// The player is ready for the next chunk; the driver must call [`Session::download`].
    Chunk(ChunkObservation),
    Done,
}

/// Step-by-step streaming session over one trace.
#[derive(Clone)]
pub struct Session<'a> {
    manifest: &'a VideoManifest,
    trace: &'a ThroughputTrace,
    forecaster: Option<&'a dyn Forecaster>,
    slot_len: f64,
    state: PlaybackState,
    next_slot_at: f64,
    pending_sleep: f64,
    forecast: f64,
    truncated: bool,
    chunks: Vec<ChunkRecord>,
    trajectory: Vec<BufferSample>,
    slots: Vec<SlotRecord>,
}

const EPS: f64 = 1e-9;

impl<'a> Session<'a> {
    pub fn new(
        manifest: &'a VideoManifest,
        trace: &'a ThroughputTrace,
        forecaster: Option<&'a dyn Forecaster>,
        cfg: &SessionConfig,
    ) -> Result<Self> {
        manifest.validate()?;
        trace.validate()?;
        if !(cfg.slot_len > 0.0) {
            return Err(Error::Invalid("slot length must be > 0".into()));
        }
        let cap = cfg.initial_cap.max(manifest.chunk_duration);
        Ok(Session {
            manifest,
            trace,
            forecaster,
            slot_len: cfg.slot_len,
            state: PlaybackState::new(cap),
            next_slot_at: 0.0,
            pending_sleep: 0.0,
            forecast: 0.0,
            truncated: false,
            chunks: Vec::new(),
            trajectory: vec![BufferSample { t: 0.0, level: 0.0, cap }],
            slots: Vec::new(),
        })
    }

    pub fn state(&self) -> &PlaybackState {
        &self.state
    }

    pub fn chunks(&self) -> &[ChunkRecord] {
        &self.chunks
    }

    pub fn is_done(&self) -> bool {
        self.truncated || self.state.next_chunk >= self.manifest.n_chunks()
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Index of the current slot (number of slots opened minus one).
    pub fn slot_index(&self) -> usize {
        self.slots.len().saturating_sub(1)
    }

    /// Advance idle time until the next decision point.
    pub fn poll(&mut self) -> Event {
        loop {
            if self.is_done() {
                return Event::Done;
            }
            let now = self.state.wall_clock;
            if now >= self.next_slot_at - EPS {
                return Event::Slot(self.open_slot());
            }
            let l = self.manifest.chunk_duration;
            if self.state.playing && self.state.buffer_level + l > self.state.buffer_cap {
                let wait = self.state.buffer_level - (self.state.buffer_cap - l);
                let until_slot = self.next_slot_at - now;
                if until_slot < wait {
                    self.idle(until_slot);
                    continue;
                }
                self.idle(wait);
                self.state.buffer_level = self.state.buffer_cap - l;
            }
            return Event::Chunk(self.chunk_observation());
        }
    }

    fn idle(&mut self, dt: f64) {
        self.state.wall_clock += dt;
        self.state.buffer_level -= dt;
        self.pending_sleep += dt;
        self.trajectory.push(self.sample());
    }

    fn sample(&self) -> BufferSample {
        BufferSample { t: self.state.wall_clock, level: self.state.buffer_level, cap: self.state.buffer_cap }
    }

    fn open_slot(&mut self) -> SlotObservation {
        let now = self.state.wall_clock;
        let index = self.slots.len();
        let trace_index = ((now / self.trace.sample_period).floor() as usize).min(self.trace.len());
        self.forecast = match self.forecaster {
            Some(f) => f.forecast(self.trace, trace_index),
            None => HarmonicForecaster::default().forecast(self.trace, trace_index),
        };
        let recent_caps: Vec<f64> = self.slots.iter().rev().take(HISTORY).rev().map(|s| s.cap).collect();
        self.slots.push(SlotRecord { index, start: now, cap: self.state.buffer_cap, forecast: self.forecast });
        self.next_slot_at = ((now / self.slot_len + EPS).floor() + 1.0) * self.slot_len;
        SlotObservation {
            slot: index,
            wall_clock: now,
            buffer_level: self.state.buffer_level,
            buffer_cap: self.state.buffer_cap,
            chunk_duration: self.manifest.chunk_duration,
            chunks_left: self.manifest.n_chunks() - self.state.next_chunk,
            n_chunks: self.manifest.n_chunks(),
            last_bitrate: self.chunks.last().map_or(0.0, |c| c.bitrate_mbps),
            throughputs: self.recent(|c| c.throughput_seen),
            recent_caps,
            forecast: self.forecast,
            trace_index,
        }
    }

    fn recent(&self, f: impl Fn(&ChunkRecord) -> f64) -> Vec<f64> {
        let start = self.chunks.len().saturating_sub(HISTORY);
        self.chunks[start..].iter().map(f).collect()
    }

    fn chunk_observation(&self) -> ChunkObservation {
        let i = self.state.next_chunk;
        let n = self.manifest.n_chunks();
        ChunkObservation {
            chunk: i,
            n_chunks: n,
            wall_clock: self.state.wall_clock,
            buffer_level: self.state.buffer_level,
            buffer_cap: self.state.buffer_cap,
            chunk_duration: self.manifest.chunk_duration,
            bitrates: self.manifest.bitrates(),
            upcoming_sizes: (i..(i + LOOKAHEAD).min(n)).map(|k| self.manifest.chunk_sizes(k)).collect(),
            last_level: self.chunks.last().map(|c| c.level),
            throughputs: self.recent(|c| c.throughput_seen),
            download_times: self.recent(|c| c.download_time),
            slot_forecast: self.forecast,
        }
    }

    /// Set the buffer cap (clamped to at least one chunk). Takes effect at
    /// the next decision point.
    pub fn set_cap(&mut self, cap: f64) {
        let cap = if cap.is_finite() { cap.max(self.manifest.chunk_duration) } else { self.state.buffer_cap };
        self.state.buffer_cap = cap;
        if let Some(slot) = self.slots.last_mut() {
            slot.cap = cap;
        }
        self.trajectory.push(self.sample());
    }

    /// Download the next chunk at `level`. Running out of trace marks the
    /// session truncated and returns the error.
    pub fn download(&mut self, level: usize) -> Result<ChunkRecord> {
        if self.is_done() {
            return Err(Error::Invalid("session already finished".into()));
        }
        let (next, mut record) = match download_chunk(&self.state, self.trace, self.manifest, level) {
            Ok(v) => v,
            Err(e) => {
                if matches!(e, Error::TraceExhausted { .. }) {
                    self.truncated = true;
                }
                return Err(e);
            }
        };
        record.sleep = self.pending_sleep;
        record.slot = self.slot_index();
        self.pending_sleep = 0.0;
        self.trajectory.push(self.sample());
        let drained = next.buffer_level - self.manifest.chunk_duration;
        self.trajectory.push(BufferSample { t: next.wall_clock, level: drained, cap: next.buffer_cap });
        self.state = next;
        self.trajectory.push(self.sample());
        self.chunks.push(record);
        Ok(record)
    }

    pub fn finish(self) -> SessionLog {
        let startup_delay = self.chunks.first().map_or(0.0, |c| c.start + c.download_time);
        let end_time = if self.truncated || self.chunks.is_empty() {
            self.state.wall_clock
        } else {
            self.state.wall_clock + self.state.buffer_level
        };
        SessionLog {
            trace_id: self.trace.id.clone(),
            manifest_id: self.manifest.id.clone(),
            chunk_duration: self.manifest.chunk_duration,
            startup_delay,
            end_time,
            truncated: self.truncated,
            chunks: self.chunks,
            trajectory: self.trajectory,
            slots: self.slots,
        }
    }
}

/// Play a whole session. The buffer policy (if any) is consulted at every
/// slot boundary, the bitrate policy before every chunk. Trace exhaustion
/// ends the session early with `truncated` set.
pub fn run_session(
    manifest: &VideoManifest,
    trace: &ThroughputTrace,
    bitrate: &mut dyn BitratePolicy,
    mut buffer: Option<&mut dyn BufferPolicy>,
    forecaster: Option<&dyn Forecaster>,
    cfg: &SessionConfig,
) -> Result<SessionLog> {
    let mut session = Session::new(manifest, trace, forecaster, cfg)?;
    bitrate.reset();
    if let Some(b) = buffer.as_deref_mut() {
        b.reset();
    }
    loop {
        match session.poll() {
            Event::Done => break,
            Event::Slot(obs) => {
                if let Some(b) = buffer.as_deref_mut() {
                    let cap = b.select_cap(&obs);
                    session.set_cap(cap);
                }
            }
            Event::Chunk(obs) => {
                let level = bitrate.select_level(&obs).min(LEVELS - 1);
                match session.download(level) {
                    Ok(_) => {}
                    Err(Error::TraceExhausted { wall_clock, chunk, .. }) => {
                        log::warn!("trace {} exhausted at t={wall_clock:.1}s (chunk {chunk})", trace.id);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(session.finish())
}

/// Always the same ladder index.
#[derive(Debug, Clone, Copy)]
pub struct FixedLevel(pub usize);

impl BitratePolicy for FixedLevel {
    fn name(&self) -> &str {
        "fixed"
    }

    fn select_level(&mut self, _: &ChunkObservation) -> usize {
        self.0
    }
}
