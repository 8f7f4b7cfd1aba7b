use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::download::ChunkRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferSample {
    pub t: f64,
    pub level: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub index: usize,
    pub start: f64,
    /// Cap chosen for this slot.
    pub cap: f64,
    /// Throughput forecast available at the slot start, Mbit/s.
    pub forecast: f64,
}

/// Complete record of one streaming session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub trace_id: String,
    pub manifest_id: String,
    pub chunk_duration: f64,
    /// Time until the first chunk arrived.
    pub startup_delay: f64,
    /// When playback of the last chunk ends (or the trace ran out).
    pub end_time: f64,
    pub truncated: bool,
    pub chunks: Vec<ChunkRecord>,
    pub trajectory: Vec<BufferSample>,
    pub slots: Vec<SlotRecord>,
}

/// Totals recovered by replaying a log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub downloading: f64,
    pub sleeping: f64,
    pub rebuffering: f64,
    /// Video seconds played by the last completion.
    pub played: f64,
    pub final_buffer: f64,
}

pub const CHUNK_CSV_HEADER: &str = "index,level,bitrate_mbps,size_mbit,start_s,download_time_s,rebuffer_s,sleep_s,throughput_seen_mbps,buffer_after_s,buffer_cap_s,slot";

impl SessionLog {
    pub fn total_rebuffer(&self) -> f64 {
        self.chunks.iter().map(|c| c.rebuffer).sum()
    }

    pub fn rebuffer_events(&self) -> usize {
        self.chunks.iter().filter(|c| c.rebuffer > 0.0).count()
    }

    /// `[start, end)` download intervals.
    pub fn download_intervals(&self) -> Vec<(f64, f64)> {
        self.chunks.iter().map(|c| (c.start, c.start + c.download_time)).collect()
    }

    /// Wall-clock window of slot `k`.
    pub fn slot_window(&self, k: usize) -> Option<(f64, f64)> {
        let s = self.slots.get(k)?;
        let end = self.slots.get(k + 1).map_or(self.end_time, |n| n.start);
        Some((s.start, end.max(s.start)))
    }

    /// Replay the log from its own records and check every accounting
    /// identity to within `tol`:
    /// - each start equals the previous completion plus the recorded sleep;
    /// - buffer, stall and throughput values follow from sizes and times;
    /// - the buffer never goes negative and never exceeds the cap except
    ///   while draining after a cap reduction;
    /// - last completion = startup + played + stalled.
    pub fn check_ledger(&self, tol: f64) -> Result<LedgerSummary> {
        let bad = |m: String| Err(Error::MalformedLog(m));
        let l = self.chunk_duration;
        let mut clock = 0.0;
        let mut buffer = 0.0;
        let mut playing = false;
        let mut sum = LedgerSummary { downloading: 0.0, sleeping: 0.0, rebuffering: 0.0, played: 0.0, final_buffer: 0.0 };
        for (k, c) in self.chunks.iter().enumerate() {
            if c.index != k {
                return bad(format!("chunk {k} has index {}", c.index));
            }
            if c.sleep < 0.0 || c.download_time < 0.0 || c.rebuffer < 0.0 {
                return bad(format!("chunk {k} has a negative duration"));
            }
            clock += c.sleep;
            if (c.start - clock).abs() > tol * clock.max(1.0) {
                return bad(format!("chunk {k} starts at {} but the ledger says {clock}", c.start));
            }
            clock = c.start;
            if playing {
                buffer -= c.sleep;
            }
            if buffer < -tol {
                return bad(format!("buffer negative ({buffer}) before chunk {k}"));
            }
            if buffer + l > c.buffer_cap + tol {
                return bad(format!("chunk {k} requested with buffer {buffer} over cap {}", c.buffer_cap));
            }
            let d = c.download_time;
            let rebuffer = if playing { (d - buffer).max(0.0) } else { 0.0 };
            if (rebuffer - c.rebuffer).abs() > tol {
                return bad(format!("chunk {k} stall {} but ledger says {rebuffer}", c.rebuffer));
            }
            if (c.throughput_seen * d - c.size_mbit).abs() > tol * c.size_mbit.max(1.0) {
                return bad(format!("chunk {k} throughput does not match size / time"));
            }
            buffer = if playing { (buffer - d).max(0.0) } else { buffer } + l;
            if (buffer - c.buffer_after).abs() > tol {
                return bad(format!("chunk {k} buffer {} but ledger says {buffer}", c.buffer_after));
            }
            buffer = c.buffer_after;
            clock += d;
            playing = true;
            sum.downloading += d;
            sum.sleeping += c.sleep;
            sum.rebuffering += c.rebuffer;
        }
        let mut prev: Option<BufferSample> = None;
        for s in &self.trajectory {
            if s.level < -tol {
                return bad(format!("buffer {} < 0 at t={}", s.level, s.t));
            }
            if s.level > s.cap + tol {
                let draining = prev.is_some_and(|p| s.level <= p.level + tol);
                if !draining {
                    return bad(format!("buffer {} above cap {} at t={}", s.level, s.cap, s.t));
                }
            }
            if prev.is_some_and(|p| s.t < p.t - tol) {
                return bad(format!("trajectory goes back in time at t={}", s.t));
            }
            prev = Some(*s);
        }
        if let Some(last) = self.chunks.last() {
            sum.final_buffer = buffer;
            sum.played = self.chunks.len() as f64 * l - buffer;
            let completion = last.start + last.download_time;
            let rhs = self.startup_delay + sum.played + sum.rebuffering;
            if (completion - rhs).abs() > tol * completion.max(1.0) {
                return bad(format!("elapsed {completion} != startup + played + stalled = {rhs}"));
            }
        }
        Ok(sum)
    }

    pub fn write_chunks_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Invalid(format!("csv write: {e}"));
        w.write_record(CHUNK_CSV_HEADER.split(',')).map_err(io)?;
        for c in &self.chunks {
            w.write_record(&[
                c.index.to_string(),
                c.level.to_string(),
                c.bitrate_mbps.to_string(),
                c.size_mbit.to_string(),
                c.start.to_string(),
                c.download_time.to_string(),
                c.rebuffer.to_string(),
                c.sleep.to_string(),
                c.throughput_seen.to_string(),
                c.buffer_after.to_string(),
                c.buffer_cap.to_string(),
                c.slot.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Invalid(format!("csv write: {e}")))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_chunks_csv(std::io::BufWriter::new(f))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Invalid(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedLog(format!("{}: {e}", path.display())))
    }
}
