//! Throughput traces: loading, synthesis, windowing and normalization.
//!
//! A trace is a uniformly sampled series of downlink throughput (Mbit/s)
//! together with the seven radio/context features that both the real-world
//! and simulated datasets have in common.

mod csv_io;
mod samples;
mod synth;

pub use csv_io::{load_trace, save_trace, write_trace, TRACE_HEADER};
pub use samples::{
    avg_future_throughput, create_samples, minmax_normalize, ColumnStats, NormStats, SampleSet,
};
pub use synth::{generate_synthetic, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of context features carried per time step.
pub const FEATURE_COUNT: usize = 7;

/// Radio data state reported alongside each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataState {
    Connected,
    Idle,
}

impl DataState {
    pub fn code(self) -> &'static str {
        match self {
            DataState::Connected => "C",
            DataState::Idle => "I",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s.trim() {
            "C" => Some(DataState::Connected),
            "I" => Some(DataState::Idle),
            _ => None,
        }
    }
}

/// Per-step context features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub speed_kmh: f64,
    pub dist_m: f64,
    pub rssi_dbm: f64,
    pub rsrp_dbm: f64,
    pub rsrq_db: f64,
    pub handovers: u32,
    pub data_state: DataState,
}

impl FeatureRow {
    /// Feature vector in model column order (data state encoded 1 = connected).
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.speed_kmh,
            self.dist_m,
            self.rssi_dbm,
            self.rsrp_dbm,
            self.rsrq_db,
            self.handovers as f64,
            match self.data_state {
                DataState::Connected => 1.0,
                DataState::Idle => 0.0,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTrace {
    pub id: String,
    /// Seconds between consecutive samples.
    pub sample_period: f64,
    /// Downlink throughput in Mbit/s.
    pub throughput: Vec<f64>,
    pub features: Vec<FeatureRow>,
}

impl ThroughputTrace {
    pub fn new(
        id: impl Into<String>,
        sample_period: f64,
        throughput: Vec<f64>,
        features: Vec<FeatureRow>,
    ) -> Result<Self> {
        let trace = ThroughputTrace { id: id.into(), sample_period, throughput, features };
        trace.validate()?;
        Ok(trace)
    }

    /// Flat throughput with neutral features.
    pub fn constant(id: impl Into<String>, mbps: f64, sample_period: f64, n: usize) -> Result<Self> {
        let row = FeatureRow {
            speed_kmh: 0.0,
            dist_m: 100.0,
            rssi_dbm: -80.0,
            rsrp_dbm: -100.0,
            rsrq_db: -10.0,
            handovers: 0,
            data_state: DataState::Connected,
        };
        ThroughputTrace::new(id, sample_period, vec![mbps; n], vec![row; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.throughput.is_empty() {
            return Err(Error::Invalid("trace must contain at least one sample".into()));
        }
        if self.throughput.len() != self.features.len() {
            return Err(Error::Invalid(format!(
                "throughput has {} samples but features has {}",
                self.throughput.len(),
                self.features.len()
            )));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(Error::Invalid(format!("sample_period must be > 0, got {}", self.sample_period)));
        }
        if let Some(v) = self.throughput.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Invalid(format!("throughput must be finite and >= 0, got {v}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.throughput.len()
    }

    pub fn is_empty(&self) -> bool {
        self.throughput.is_empty()
    }

    /// Total covered time in seconds.
    pub fn duration(&self) -> f64 {
        self.sample_period * self.throughput.len() as f64
    }

    /// Index of the sample whose interval contains `t` (clamped to the last sample).
    pub fn index_at(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let k = (t / self.sample_period).floor() as usize;
        k.min(self.len() - 1)
    }

    /// Input row for the recurrent predictor: features followed by throughput.
    pub fn model_row(&self, i: usize) -> [f64; FEATURE_COUNT + 1] {
        let f = self.features[i].to_array();
        let mut row = [0.0; FEATURE_COUNT + 1];
        row[..FEATURE_COUNT].copy_from_slice(&f);
        row[FEATURE_COUNT] = self.throughput[i];
        row
    }
}

#[cfg(test)]
pub(crate) fn flat_trace(values: &[f64], sample_period: f64) -> ThroughputTrace {
    let row = FeatureRow {
        speed_kmh: 0.0,
        dist_m: 100.0,
        rssi_dbm: -80.0,
        rsrp_dbm: -100.0,
        rsrq_db: -10.0,
        handovers: 0,
        data_state: DataState::Connected,
    };
    ThroughputTrace::new("test", sample_period, values.to_vec(), vec![row; values.len()]).unwrap()
}
