//! Synthetic cellular throughput: an AR(1) process around a mean level with
//! multiplicative dips that start at handover events and recover linearly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataState, FeatureRow, ThroughputTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Trace length in seconds.
    pub duration: f64,
    pub sample_period: f64,
    /// Mbit/s
    pub mean_throughput: f64,
    /// Per-step AR(1) coefficient in [0, 1).
    pub ar_coefficient: f64,
    /// Innovation standard deviation, Mbit/s.
    pub noise_std: f64,
    /// Handover events per second.
    pub handover_rate: f64,
    /// Fraction of throughput lost at the onset of a handover dip.
    pub handover_dip_fraction: f64,
    /// Seconds for a dip to recover linearly.
    pub dip_recovery: f64,
    pub speed_kmh: f64,
    /// Relative throughput swing with distance to the serving cell: the level
    /// is scaled by `1 + g` at the cell and `1 - g` at the far edge.
    pub distance_gain: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duration: 600.0,
            sample_period: 2.0,
            mean_throughput: 10.0,
            ar_coefficient: 0.97,
            noise_std: 1.0,
            handover_rate: 0.01,
            handover_dip_fraction: 0.7,
            dip_recovery: 10.0,
            speed_kmh: 30.0,
            distance_gain: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("synth config: {what}")));
        if !(self.duration > 0.0) {
            return bad("duration must be > 0");
        }
        if !(self.sample_period > 0.0) {
            return bad("sample_period must be > 0");
        }
        if !(self.mean_throughput >= 0.0) {
            return bad("mean_throughput must be >= 0");
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return bad("ar_coefficient must lie in [0, 1)");
        }
        if !(self.noise_std >= 0.0) || !(self.handover_rate >= 0.0) {
            return bad("noise_std and handover_rate must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.handover_dip_fraction) {
            return bad("handover_dip_fraction must lie in [0, 1]");
        }
        if !(self.dip_recovery >= 0.0) || !(self.speed_kmh >= 0.0) {
            return bad("dip_recovery and speed_kmh must be >= 0");
        }
        if !(0.0..1.0).contains(&self.distance_gain) {
            return bad("distance_gain must lie in [0, 1)");
        }
        Ok(())
    }

    /// Number of samples the generator emits.
    pub fn steps(&self) -> usize {
        ((self.duration / self.sample_period).round() as usize).max(1)
    }
}

const MIN_DIST: f64 = 20.0;
const MAX_DIST: f64 = 600.0;

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<ThroughputTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.steps();
    let dt = cfg.sample_period;
    let a = cfg.ar_coefficient;
    let stationary_sd = cfg.noise_std / (1.0 - a * a).sqrt();
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let dip_steps = (cfg.dip_recovery / dt).ceil().max(1.0) as usize;
    let handover_p = (cfg.handover_rate * dt).min(1.0);

    let mut x: f64 = stationary_sd * rng.sample::<f64, _>(StandardNormal);
    let mut dip_left = 0usize;
    let mut dist = 50.0 + 250.0 * rng.gen::<f64>();
    let mut heading = 1.0;

    let mut throughput = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    for t in 0..n {
        if t > 0 {
            x = a * x + cfg.noise_std * jitter.sample(&mut rng);
        }
        let handover = rng.gen::<f64>() < handover_p;
        if handover {
            dip_left = dip_steps;
            dist = 20.0 + 40.0 * rng.gen::<f64>();
            heading = 1.0;
        }
        let depth = if dip_left > 0 {
            let d = cfg.handover_dip_fraction * dip_left as f64 / dip_steps as f64;
            dip_left -= 1;
            d
        } else {
            0.0
        };

        let speed = (cfg.speed_kmh + 0.5 * jitter.sample(&mut rng)).max(0.0);
        dist += heading * speed * dt / 3.6;
        if dist > MAX_DIST {
            dist = 2.0 * MAX_DIST - dist;
            heading = -1.0;
        } else if dist < MIN_DIST {
            dist = 2.0 * MIN_DIST - dist;
            heading = 1.0;
        }
        let edge = (dist - MIN_DIST) / (MAX_DIST - MIN_DIST);
        let level = cfg.mean_throughput * (1.0 + cfg.distance_gain * (1.0 - 2.0 * edge)) + x;
        let y = (level * (1.0 - depth)).max(0.0);

        let rel = if cfg.mean_throughput > 0.0 { (level / cfg.mean_throughput).max(0.05) } else { 1.0 };
        let rssi = -85.0 + 20.0 * rel.log10() - 15.0 * depth + jitter.sample(&mut rng);
        throughput.push(y);
        features.push(FeatureRow {
            speed_kmh: speed,
            dist_m: dist,
            rssi_dbm: rssi,
            rsrp_dbm: rssi - 25.0 + 0.5 * jitter.sample(&mut rng),
            rsrq_db: -10.0 + 3.0 * (rel - 1.0).clamp(-1.0, 1.0) - 4.0 * depth + 0.5 * jitter.sample(&mut rng),
            handovers: handover as u32,
            data_state: if y > 0.05 * cfg.mean_throughput { DataState::Connected } else { DataState::Idle },
        });
    }

    ThroughputTrace::new(format!("synth-{}", cfg.seed), dt, throughput, features)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_process_is_constant() {
        let cfg = SynthConfig { noise_std: 0.0, handover_rate: 0.0, mean_throughput: 7.5, ..Default::default() };
        let t = generate_synthetic(&cfg).unwrap();
        assert!(t.throughput.iter().all(|&y| y == 7.5));
        assert!(t.features.iter().all(|f| f.handovers == 0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SynthConfig { seed: 42, handover_rate: 0.05, ..Default::default() };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SynthConfig { seed: 43, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).unwrap().throughput, generate_synthetic(&other).unwrap().throughput);
    }

    #[test]
    fn empirical_mean_close_to_target() {
        // 10 000 steps, no handovers so the process mean is exactly the configured one
        let cfg = SynthConfig {
            duration: 10_000.0,
            sample_period: 1.0,
            mean_throughput: 20.0,
            ar_coefficient: 0.9,
            noise_std: 1.0,
            handover_rate: 0.0,
            seed: 7,
            ..Default::default()
        };
        let t = generate_synthetic(&cfg).unwrap();
        assert_eq!(t.len(), 10_000);
        let mean = t.throughput.iter().sum::<f64>() / t.len() as f64;
        assert!((mean - 20.0).abs() < 0.05 * 20.0, "mean {mean}");
    }

    #[test]
    fn handovers_mark_dips() {
        let cfg = SynthConfig { noise_std: 0.0, handover_rate: 0.05, seed: 3, ..Default::default() };
        let t = generate_synthetic(&cfg).unwrap();
        let idx: Vec<usize> = (0..t.len()).filter(|&i| t.features[i].handovers > 0).collect();
        assert!(!idx.is_empty());
        for i in idx {
            assert!(t.throughput[i] < cfg.mean_throughput);
        }
    }

    #[test]
    fn rejects_bad_ar() {
        let cfg = SynthConfig { ar_coefficient: 1.0, ..Default::default() };
        assert!(generate_synthetic(&cfg).is_err());
    }
}
