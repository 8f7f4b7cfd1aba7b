use serde::{Deserialize, Serialize};

use super::manifest::VideoManifest;
use crate::error::{Error, Result};
use crate::trace::ThroughputTrace;

/// Player state between downloads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaybackState {
    /// Seconds since session start.
    pub wall_clock: f64,
    /// Seconds of buffered video.
    pub buffer_level: f64,
    /// Seconds; downloads wait while buffer + chunk would exceed this.
    pub buffer_cap: f64,
    pub next_chunk: usize,
    pub total_rebuffer: f64,
    pub rebuffer_events: usize,
    /// False until the first chunk arrives (startup is not rebuffering).
    pub playing: bool,
}

impl PlaybackState {
    pub fn new(buffer_cap: f64) -> Self {
        PlaybackState {
            wall_clock: 0.0,
            buffer_level: 0.0,
            buffer_cap,
            next_chunk: 0,
            total_rebuffer: 0.0,
            rebuffer_events: 0,
            playing: false,
        }
    }
}

/// One downloaded chunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub index: usize,
    pub level: usize,
    pub bitrate_mbps: f64,
    pub size_mbit: f64,
    /// Wall-clock time the download began.
    pub start: f64,
    pub download_time: f64,
    /// Stall caused by this download.
    pub rebuffer: f64,
    /// Idle wait between the previous completion and this download.
    pub sleep: f64,
    /// size / download_time.
    pub throughput_seen: f64,
    pub buffer_after: f64,
    pub buffer_cap: f64,
    pub slot: usize,
}

/// Seconds needed to move `size_mbit` starting at `t0` over the
/// piecewise-constant trace. On exhaustion returns the untransferred Mbit.
pub fn transfer_time(trace: &ThroughputTrace, t0: f64, size_mbit: f64) -> std::result::Result<f64, f64> {
    let dt = trace.sample_period;
    let mut remaining = size_mbit;
    if remaining <= 0.0 {
        return Ok(0.0);
    }
    let mut i = (t0 / dt).floor().max(0.0) as usize;
    let mut t = t0;
    while i < trace.len() {
        let seg_end = (i + 1) as f64 * dt;
        let span = seg_end - t;
        let rate = trace.throughput[i];
        if span > 0.0 && rate > 0.0 {
            let capacity = rate * span;
            if capacity >= remaining {
                return Ok(t + remaining / rate - t0);
            }
            remaining -= capacity;
        }
        t = seg_end.max(t);
        i += 1;
    }
    Err(remaining)
}

/// Download chunk `state.next_chunk` at `level`, starting immediately.
/// The buffer drains while the download runs and a stall accrues once it
/// empties; the new chunk is appended on completion.
pub fn download_chunk(
    state: &PlaybackState,
    trace: &ThroughputTrace,
    manifest: &VideoManifest,
    level: usize,
) -> Result<(PlaybackState, ChunkRecord)> {
    let n = manifest.n_chunks();
    if state.next_chunk >= n {
        return Err(Error::OutOfBounds { index: state.next_chunk, len: n });
    }
    if level >= manifest.levels.len() {
        return Err(Error::OutOfBounds { index: level, len: manifest.levels.len() });
    }
    let size = manifest.levels[level].sizes_mbit[state.next_chunk];
    let d = transfer_time(trace, state.wall_clock, size).map_err(|remaining_mbit| Error::TraceExhausted {
        wall_clock: state.wall_clock,
        chunk: state.next_chunk,
        remaining_mbit,
    })?;

    let mut next = *state;
    let rebuffer = if state.playing { (d - state.buffer_level).max(0.0) } else { 0.0 };
    let drained = if state.playing { (state.buffer_level - d).max(0.0) } else { state.buffer_level };
    next.buffer_level = drained + manifest.chunk_duration;
    next.wall_clock = state.wall_clock + d;
    next.next_chunk += 1;
    next.total_rebuffer += rebuffer;
    if rebuffer > 0.0 {
        next.rebuffer_events += 1;
    }
    next.playing = true;

    let record = ChunkRecord {
        index: state.next_chunk,
        level,
        bitrate_mbps: manifest.levels[level].bitrate_mbps,
        size_mbit: size,
        start: state.wall_clock,
        download_time: d,
        rebuffer,
        sleep: 0.0,
        throughput_seen: if d > 0.0 { size / d } else { f64::INFINITY },
        buffer_after: next.buffer_level,
        buffer_cap: state.buffer_cap,
        slot: 0,
    };
    Ok((next, record))
}
