//! Chunk-level video streaming emulator driven by a throughput trace.

mod download;
mod log;
mod manifest;
mod qoe;
mod session;

pub use download::{download_chunk, transfer_time, ChunkRecord, PlaybackState};
pub use log::{BufferSample, LedgerSummary, SessionLog, SlotRecord, CHUNK_CSV_HEADER};
pub use manifest::{Level, VideoManifest, DEFAULT_CHUNK_DURATION, DEFAULT_LADDER, LEVELS};
pub use qoe::{chunk_qoe, qoe_breakdown, qoe_of_log, QoeBreakdown, QoeParams, DEFAULT_REBUFFER_PENALTY};
pub use session::{
    run_session, BitratePolicy, BufferPolicy, ChunkObservation, Event, FixedLevel, Forecaster, HarmonicForecaster,
    Session, SessionConfig, SlotObservation, HISTORY, LOOKAHEAD,
};
