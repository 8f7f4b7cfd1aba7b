//! Independent oracles and random fixtures shared by the integration tests
//! and the acceptance suite.
#![allow(dead_code)]

use abrlab::abr::AbrContext;
use abrlab::emulator::{SessionConfig, SessionLog, VideoManifest, LEVELS};
use abrlab::rl::{CapBounds, RandomBitrate, RandomBuffer};
use abrlab::trace::{DataState, FeatureRow, ThroughputTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// QoE by direct summation: mean bitrate, minus mu times mean stall, minus
/// mean absolute bitrate change between consecutive chunks.
pub fn qoe_oracle(bitrates: &[f64], rebuffers: &[f64], mu: f64) -> f64 {
    let n = bitrates.len() as f64;
    let mut rate = 0.0;
    for b in bitrates {
        rate += b;
    }
    let mut stall = 0.0;
    for r in rebuffers {
        stall += r;
    }
    let mut switches = 0.0;
    for i in 1..bitrates.len() {
        switches += (bitrates[i] - bitrates[i - 1]).abs();
    }
    let smooth = if bitrates.len() > 1 { switches / (n - 1.0) } else { 0.0 };
    rate / n - mu * stall / n - smooth
}

/// Score of one planned level sequence under the MPC model: constant
/// throughput, each download starting once the buffer has room for a chunk.
pub fn mpc_sequence_score(ctx: &AbrContext, throughput: f64, mu: f64, seq: &[usize]) -> f64 {
    let l = ctx.chunk_duration;
    let mut buffer = ctx.buffer_level;
    let mut prev = ctx.last_level.map(|k| ctx.bitrates[k]);
    let mut score = 0.0;
    for (i, &m) in seq.iter().enumerate() {
        let ready = if buffer < ctx.buffer_cap - l { buffer } else { (ctx.buffer_cap - l).max(0.0) };
        let d = ctx.upcoming_sizes[i][m] / throughput;
        let stall = if d > ready { d - ready } else { 0.0 };
        buffer = if ready > d { ready - d } else { 0.0 } + l;
        let r = ctx.bitrates[m];
        let sw = match prev {
            Some(p) => (r - p).abs(),
            None => 0.0,
        };
        score += r - mu * stall - sw;
        prev = Some(r);
    }
    score
}

/// First level of the best sequence over all 6^h sequences, enumerated in
/// lexicographic order; a later sequence wins only with a strictly higher score.
pub fn mpc_oracle(ctx: &AbrContext, throughput: f64, mu: f64) -> usize {
    let h = ctx.horizon.min(ctx.upcoming_sizes.len());
    let total = LEVELS.pow(h as u32);
    let mut best = f64::NEG_INFINITY;
    let mut first = 0;
    let mut seq = vec![0usize; h];
    for code in 0..total {
        let mut c = code;
        for k in (0..h).rev() {
            seq[k] = c % LEVELS;
            c /= LEVELS;
        }
        let s = mpc_sequence_score(ctx, throughput, mu, &seq);
        if s > best {
            best = s;
            first = seq[0];
        }
    }
    first
}

pub fn random_ctx(rng: &mut ChaCha8Rng, horizon: usize) -> AbrContext {
    let bitrates = [0.3, 0.75, 1.2, 1.85, 2.85, 4.3];
    let l = 8.0;
    let upcoming_sizes = (0..horizon)
        .map(|_| {
            let f = rng.gen_range(0.7..1.3);
            std::array::from_fn(|m| bitrates[m] * l * f)
        })
        .collect();
    let n_tp = rng.gen_range(1..8);
    AbrContext {
        buffer_level: rng.gen_range(0.0..40.0),
        buffer_cap: rng.gen_range(16.0..60.0),
        chunk_duration: l,
        last_level: if rng.gen_bool(0.8) { Some(rng.gen_range(0..LEVELS)) } else { None },
        last_throughputs: (0..n_tp).map(|_| rng.gen_range(0.2..12.0)).collect(),
        predicted_throughput: Some(rng.gen_range(0.2..12.0)),
        bitrates,
        upcoming_sizes,
        horizon,
    }
}

pub fn neutral_row() -> FeatureRow {
    FeatureRow {
        speed_kmh: 0.0,
        dist_m: 100.0,
        rssi_dbm: -80.0,
        rsrp_dbm: -100.0,
        rsrq_db: -10.0,
        handovers: 0,
        data_state: DataState::Connected,
    }
}

/// Piecewise-constant throughput with occasional outages.
pub fn random_trace(rng: &mut ChaCha8Rng, samples: usize) -> ThroughputTrace {
    let period = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let mut v = Vec::with_capacity(samples);
    let mut level = rng.gen_range(0.5..15.0);
    for _ in 0..samples {
        if rng.gen_bool(0.1) {
            level = rng.gen_range(0.5..15.0);
        }
        v.push(if rng.gen_bool(0.03) { 0.0 } else { level });
    }
    ThroughputTrace::new("random", period, v, vec![neutral_row(); samples]).unwrap()
}

/// A session with random bitrate and cap decisions on a random trace.
pub fn random_session(seed: u64, chunks: usize) -> (ThroughputTrace, SessionLog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trace = random_trace(&mut rng, 2000);
    let manifest = VideoManifest::synthetic(chunks, 8.0, seed).unwrap();
    let mut bitrate = RandomBitrate(ChaCha8Rng::seed_from_u64(seed ^ 0xA5));
    let mut buffer = RandomBuffer { rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5A), bounds: CapBounds::default() };
    let cfg = SessionConfig { initial_cap: rng.gen_range(16.0..64.0), slot_len: rng.gen_range(10.0..40.0) };
    let use_buffer = rng.gen_bool(0.7);
    let log = abrlab::emulator::run_session(
        &manifest,
        &trace,
        &mut bitrate,
        if use_buffer { Some(&mut buffer) } else { None },
        None,
        &cfg,
    )
    .unwrap();
    (trace, log)
}

/// Mbit delivered by a piecewise-constant trace over [t0, t1].
pub fn delivered(trace: &ThroughputTrace, t0: f64, t1: f64) -> f64 {
    let dt = trace.sample_period;
    let mut acc = 0.0;
    for (i, v) in trace.throughput.iter().enumerate() {
        let a = (i as f64 * dt).max(t0);
        let b = ((i + 1) as f64 * dt).min(t1);
        if b > a {
            acc += v * (b - a);
        }
    }
    acc
}

/// Replay a log against its trace and check the bookkeeping from scratch:
/// chained start times, stalls, buffer levels, bytes moved, buffer bounds and
/// the final time balance. Returns the first violation.
pub fn ledger_oracle(trace: &ThroughputTrace, log: &SessionLog, tol: f64) -> Result<(), String> {
    let l = log.chunk_duration;
    let mut prev_end = 0.0;
    let mut buffer = 0.0;
    let mut stalled = 0.0;
    for (k, c) in log.chunks.iter().enumerate() {
        let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= tol * scale.max(1.0);
        if !close(c.start, prev_end + c.sleep, c.start) {
            return Err(format!("chunk {k}: start {} != previous end {prev_end} + sleep {}", c.start, c.sleep));
        }
        if !close(c.throughput_seen * c.download_time, c.size_mbit, c.size_mbit) {
            return Err(format!("chunk {k}: throughput_seen x time != size"));
        }
        let moved = delivered(trace, c.start, c.start + c.download_time);
        if !close(moved, c.size_mbit, c.size_mbit) {
            return Err(format!("chunk {k}: trace delivers {moved} Mbit, chunk is {}", c.size_mbit));
        }
        let before = if k == 0 { 0.0 } else { buffer - c.sleep };
        if before < -tol {
            return Err(format!("chunk {k}: slept past an empty buffer"));
        }
        if before + l > c.buffer_cap + tol {
            return Err(format!("chunk {k}: requested without room under the cap"));
        }
        let stall = if k == 0 { 0.0 } else { (c.download_time - before).max(0.0) };
        if !close(stall, c.rebuffer, 1.0) {
            return Err(format!("chunk {k}: stall {} expected {stall}", c.rebuffer));
        }
        buffer = if k == 0 { l } else { (before - c.download_time).max(0.0) + l };
        if !close(buffer, c.buffer_after, buffer) {
            return Err(format!("chunk {k}: buffer_after {} expected {buffer}", c.buffer_after));
        }
        stalled += stall;
        prev_end = c.start + c.download_time;
    }
    if !log.chunks.is_empty() {
        let played = log.chunks.len() as f64 * l - buffer;
        let balance = log.startup_delay + played + stalled;
        if (prev_end - balance).abs() > tol * prev_end.max(1.0) {
            return Err(format!("elapsed {prev_end} != startup + played + stalled = {balance}"));
        }
    }
    let mut last: Option<(f64, f64)> = None;
    for s in &log.trajectory {
        if s.level < -tol {
            return Err(format!("buffer {} below zero at t={}", s.level, s.t));
        }
        // above the cap only while draining after the cap was lowered
        if s.level > s.cap + tol && !last.is_some_and(|(lv, _)| s.level <= lv + tol) {
            return Err(format!("buffer {} above cap {} at t={}", s.level, s.cap, s.t));
        }
        if last.is_some_and(|(_, t)| s.t < t - tol) {
            return Err(format!("trajectory goes back in time at t={}", s.t));
        }
        last = Some((s.level, s.t));
    }
    Ok(())
}
