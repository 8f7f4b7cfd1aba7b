//! Radio energy accounting: RRC state dwell times reconstructed from the
//! download intervals of a session, priced per state.

use serde::{Deserialize, Serialize};

use crate::emulator::SessionLog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RrcState {
    #[serde(rename = "CONNECTED")]
    Connected,
    #[serde(rename = "CONNECTED_INACTIVE")]
    Inactive,
    #[serde(rename = "IDLE")]
    Idle,
}

/// Power draw and timers of the radio state machine. The defaults are
/// placeholder estimates; results are only meaningful relative to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrcConfig {
    /// W
    pub power_connected: f64,
    pub power_inactive: f64,
    pub power_idle: f64,
    /// Seconds of silence before CONNECTED drops to CONNECTED_INACTIVE.
    pub inactivity_timer: f64,
    /// Seconds in CONNECTED_INACTIVE before dropping to IDLE.
    pub inactive_timer: f64,
    /// Seconds spent re-promoting to CONNECTED before a download.
    pub promotion_delay: f64,
    pub promotion_power: f64,
}

impl Default for RrcConfig {
    fn default() -> Self {
        RrcConfig {
            power_connected: 1.2,
            power_inactive: 0.1,
            power_idle: 0.02,
            inactivity_timer: 5.0,
            inactive_timer: 10.0,
            promotion_delay: 0.05,
            promotion_power: 1.2,
        }
    }
}

impl RrcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.power_connected > self.power_inactive && self.power_inactive > self.power_idle && self.power_idle >= 0.0) {
            return Err(Error::Invalid("RRC powers must satisfy connected > inactive > idle >= 0".into()));
        }
        if !(self.inactivity_timer >= 0.0 && self.inactive_timer >= 0.0 && self.promotion_delay >= 0.0) {
            return Err(Error::Invalid("RRC timers must be >= 0".into()));
        }
        if !(self.promotion_power >= 0.0) {
            return Err(Error::Invalid("promotion power must be >= 0".into()));
        }
        Ok(())
    }

    pub fn power(&self, phase: Phase) -> f64 {
        match phase {
            Phase::State(RrcState::Connected) => self.power_connected,
            Phase::State(RrcState::Inactive) => self.power_inactive,
            Phase::State(RrcState::Idle) => self.power_idle,
            Phase::Promotion => self.promotion_power,
        }
    }
}

/// What the radio is doing during a timeline segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    State(RrcState),
    /// Transition from a low state up to CONNECTED.
    Promotion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dwell {
    pub connected: f64,
    pub inactive: f64,
    pub idle: f64,
    pub promotion: f64,
}

impl Dwell {
    pub fn total(&self) -> f64 {
        self.connected + self.inactive + self.idle + self.promotion
    }

    fn add(&mut self, phase: Phase, dt: f64) {
        match phase {
            Phase::State(RrcState::Connected) => self.connected += dt,
            Phase::State(RrcState::Inactive) => self.inactive += dt,
            Phase::State(RrcState::Idle) => self.idle += dt,
            Phase::Promotion => self.promotion += dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub from: RrcState,
    pub to: RrcState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrcTimeline {
    pub start: f64,
    pub end: f64,
    /// Contiguous, covering `[start, end]`.
    pub segments: Vec<Segment>,
    pub dwell: Dwell,
    pub transitions: Vec<Transition>,
}

impl RrcTimeline {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

struct Builder {
    segments: Vec<Segment>,
}

impl Builder {
    fn push(&mut self, start: f64, end: f64, phase: Phase) {
        if end <= start {
            return;
        }
        if let Some(last) = self.segments.last_mut() {
            if last.phase == phase {
                last.end = end;
                return;
            }
        }
        self.segments.push(Segment { start, end, phase });
    }

    /// Silence from `t0` to `t1` after activity ended at `t0`.
    fn tail(&mut self, t0: f64, t1: f64, cfg: &RrcConfig) {
        let c_end = (t0 + cfg.inactivity_timer).min(t1);
        self.push(t0, c_end, Phase::State(RrcState::Connected));
        let i_end = (c_end + cfg.inactive_timer).min(t1);
        self.push(c_end, i_end, Phase::State(RrcState::Inactive));
        self.push(i_end, t1, Phase::State(RrcState::Idle));
    }

    /// Re-label the end of a trailing low-power segment as promotion.
    fn promote(&mut self, at: f64, cfg: &RrcConfig) {
        let Some(last) = self.segments.last_mut() else { return };
        if matches!(last.phase, Phase::State(RrcState::Connected) | Phase::Promotion) || cfg.promotion_delay <= 0.0 {
            return;
        }
        let p = cfg.promotion_delay.min(at - last.start);
        if p >= at - last.start {
            last.phase = Phase::Promotion;
        } else {
            last.end = at - p;
            self.segments.push(Segment { start: at - p, end: at, phase: Phase::Promotion });
        }
    }
}

/// Timeline over `[start, end]` for the given download intervals. Before the
/// first download the radio is IDLE; each download is CONNECTED and is
/// followed by the inactivity and inactive timers.
pub fn derive_timeline(intervals: &[(f64, f64)], start: f64, end: f64, cfg: &RrcConfig) -> Result<RrcTimeline> {
    cfg.validate()?;
    if !(end >= start) {
        return Err(Error::MalformedLog(format!("session ends ({end}) before it starts ({start})")));
    }
    let mut b = Builder { segments: Vec::new() };
    let mut cursor = start;
    let mut active_before = false;
    for (k, &(a, z)) in intervals.iter().enumerate() {
        if !(z >= a) || a < cursor - 1e-9 || z > end + 1e-9 {
            return Err(Error::MalformedLog(format!(
                "download {k} [{a}, {z}] overlaps its predecessor or leaves the session window"
            )));
        }
        let a = a.max(cursor);
        let z = z.min(end).max(a);
        if active_before {
            b.tail(cursor, a, cfg);
        } else {
            b.push(cursor, a, Phase::State(RrcState::Idle));
        }
        b.promote(a, cfg);
        b.push(a, z, Phase::State(RrcState::Connected));
        cursor = z;
        active_before = true;
    }
    if active_before {
        b.tail(cursor, end, cfg);
    } else {
        b.push(cursor, end, Phase::State(RrcState::Idle));
    }

    let mut dwell = Dwell::default();
    let mut transitions = Vec::new();
    let mut prev: Option<RrcState> = None;
    for s in &b.segments {
        dwell.add(s.phase, s.end - s.start);
        let state = match s.phase {
            Phase::State(st) => st,
            Phase::Promotion => RrcState::Connected,
        };
        if let Some(p) = prev {
            if p != state {
                transitions.push(Transition { t: s.start, from: p, to: state });
            }
        }
        prev = Some(state);
    }
    Ok(RrcTimeline { start, end, segments: b.segments, dwell, transitions })
}

pub fn derive_rrc_timeline(log: &SessionLog, cfg: &RrcConfig) -> Result<RrcTimeline> {
    derive_timeline(&log.download_intervals(), 0.0, log.end_time, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub session_id: String,
    pub joules_total: f64,
    pub joules_per_state: Dwell,
    /// Absent when nothing was downloaded.
    pub joules_per_bit: Option<f64>,
    pub duration: f64,
}

/// Price a timeline. `bits` is the total downloaded volume.
pub fn energy(timeline: &RrcTimeline, cfg: &RrcConfig, bits: f64, session_id: &str) -> EnergyReport {
    let d = timeline.dwell;
    let per = Dwell {
        connected: d.connected * cfg.power_connected,
        inactive: d.inactive * cfg.power_inactive,
        idle: d.idle * cfg.power_idle,
        promotion: d.promotion * cfg.promotion_power,
    };
    let total = per.total();
    EnergyReport {
        session_id: session_id.to_string(),
        joules_total: total,
        joules_per_state: per,
        joules_per_bit: (bits > 0.0).then(|| total / bits),
        duration: timeline.duration(),
    }
}

pub fn session_energy(log: &SessionLog, cfg: &RrcConfig) -> Result<EnergyReport> {
    let tl = derive_rrc_timeline(log, cfg)?;
    let bits: f64 = log.chunks.iter().map(|c| c.size_mbit * 1e6).sum();
    Ok(energy(&tl, cfg, bits, &format!("{}/{}", log.trace_id, log.manifest_id)))
}

/// Joules spent inside `[t0, t1]`.
pub fn window_energy(timeline: &RrcTimeline, cfg: &RrcConfig, t0: f64, t1: f64) -> f64 {
    timeline
        .segments
        .iter()
        .map(|s| {
            let overlap = s.end.min(t1) - s.start.max(t0);
            if overlap > 0.0 {
                overlap * cfg.power(s.phase)
            } else {
                0.0
            }
        })
        .sum()
}

/// Extra playback time, relative to a reference policy, bought by the energy
/// policy `a` saves: (e_ref − e_a) / e_ref × t_a.
pub fn extra_playtime(e_ref: f64, e_a: f64, t_a: f64) -> Result<f64> {
    if !(e_ref > 0.0) {
        return Err(Error::Domain(format!("reference energy must be > 0, got {e_ref}")));
    }
    Ok((e_ref - e_a) / e_ref * t_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_promo() -> RrcConfig {
        RrcConfig { promotion_delay: 0.0, ..Default::default() }
    }

    #[test]
    fn single_download_walks_the_timers() {
        let tl = derive_timeline(&[(0.0, 8.0)], 0.0, 30.0, &RrcConfig::default()).unwrap();
        assert_eq!(tl.dwell.connected, 13.0);
        assert_eq!(tl.dwell.inactive, 10.0);
        assert_eq!(tl.dwell.idle, 7.0);
        assert_eq!(tl.dwell.promotion, 0.0);
        assert_eq!(tl.transitions.len(), 2);
    }

    #[test]
    fn short_gaps_stay_connected() {
        let tl = derive_timeline(&[(0.0, 4.0), (6.0, 9.0), (12.0, 20.0)], 0.0, 22.0, &RrcConfig::default()).unwrap();
        assert_eq!(tl.dwell.connected, 22.0);
        assert_eq!(tl.dwell.inactive + tl.dwell.idle, 0.0);
    }

    #[test]
    fn empty_log_is_idle() {
        let tl = derive_timeline(&[], 0.0, 50.0, &RrcConfig::default()).unwrap();
        assert_eq!(tl.dwell.idle, 50.0);
        assert_eq!(energy(&tl, &RrcConfig::default(), 0.0, "x").joules_per_bit, None);
    }

    #[test]
    fn promotion_is_carved_from_the_low_state() {
        let cfg = RrcConfig::default();
        let tl = derive_timeline(&[(0.0, 2.0), (30.0, 32.0)], 0.0, 40.0, &cfg).unwrap();
        // 2 + 5 connected, 10 inactive, 13 − 0.05 idle, 0.05 promotion,
        // 2 + 5 connected, 3 inactive
        assert!((tl.dwell.connected - 14.0).abs() < 1e-12);
        assert!((tl.dwell.inactive - 13.0).abs() < 1e-12);
        assert!((tl.dwell.idle - 12.95).abs() < 1e-12);
        assert!((tl.dwell.promotion - 0.05).abs() < 1e-12);
        assert!((tl.dwell.total() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn hand_priced_energy() {
        let tl = RrcTimeline {
            start: 0.0,
            end: 15.0,
            segments: vec![],
            dwell: Dwell { connected: 10.0, idle: 5.0, ..Default::default() },
            transitions: vec![],
        };
        let r = energy(&tl, &RrcConfig::default(), 8e6, "s");
        assert!((r.joules_total - 12.1).abs() < 1e-12);
        assert!((r.joules_per_bit.unwrap() - 12.1 / 8e6).abs() < 1e-18);
    }

    #[test]
    fn overlapping_downloads_rejected() {
        assert!(matches!(
            derive_timeline(&[(0.0, 5.0), (4.0, 6.0)], 0.0, 10.0, &no_promo()),
            Err(Error::MalformedLog(_))
        ));
    }

    #[test]
    fn extra_playtime_cases() {
        assert_eq!(extra_playtime(100.0, 58.0, 100.0).unwrap(), 42.0);
        assert_eq!(extra_playtime(100.0, 100.0, 70.0).unwrap(), 0.0);
        assert_eq!(extra_playtime(80.0, 0.0, 70.0).unwrap(), 70.0);
        assert!(matches!(extra_playtime(0.0, 1.0, 1.0), Err(Error::Domain(_))));
    }

    fn intervals() -> impl Strategy<Value = (Vec<(f64, f64)>, f64)> {
        prop::collection::vec((0.0f64..40.0, 0.0f64..20.0), 0..12).prop_map(|gaps| {
            let mut t = 0.0;
            let mut v = Vec::new();
            for (g, d) in gaps {
                let a = t + g;
                v.push((a, a + d));
                t = a + d;
            }
            (v, t + 25.0)
        })
    }

    proptest! {
        #[test]
        fn dwell_covers_session((iv, end) in intervals()) {
            let tl = derive_timeline(&iv, 0.0, end, &RrcConfig::default()).unwrap();
            prop_assert!((tl.dwell.total() - end).abs() < 1e-9);
            let mut t = 0.0;
            for s in &tl.segments {
                prop_assert!((s.start - t).abs() < 1e-12);
                t = s.end;
            }
        }

        #[test]
        fn longer_downloads_cost_more((iv, end) in intervals(), stretch in 0.0f64..3.0) {
            let cfg = RrcConfig::default();
            let mut longer = Vec::new();
            let mut shift = 0.0;
            for &(a, z) in &iv {
                longer.push((a + shift, z + shift + stretch));
                shift += stretch;
            }
            let short = derive_timeline(&iv, 0.0, end, &cfg).unwrap();
            let long = derive_timeline(&longer, 0.0, end + shift, &cfg).unwrap();
            prop_assert!(long.dwell.connected >= short.dwell.connected - 1e-9);
            prop_assert!(energy(&long, &cfg, 1.0, "").joules_total >= energy(&short, &cfg, 1.0, "").joules_total - 1e-9);
        }

        #[test]
        fn playtime_linear_and_antitone(e_ref in 1.0f64..500.0, a in 0.0f64..500.0, b in 0.0f64..500.0, t in 0.0f64..1000.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(extra_playtime(e_ref, lo, t).unwrap() >= extra_playtime(e_ref, hi, t).unwrap());
            let x = extra_playtime(e_ref, a, t).unwrap();
            prop_assert!((extra_playtime(e_ref, a, 2.0 * t).unwrap() - 2.0 * x).abs() <= 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn window_energy_partitions((iv, end) in intervals(), cut in 0.0f64..1.0) {
            let cfg = RrcConfig::default();
            let tl = derive_timeline(&iv, 0.0, end, &cfg).unwrap();
            let m = cut * end;
            let total = energy(&tl, &cfg, 1.0, "").joules_total;
            let split = window_energy(&tl, &cfg, 0.0, m) + window_energy(&tl, &cfg, m, end);
            prop_assert!((total - split).abs() < 1e-9 * (1.0 + total));
        }
    }
}
