//! Experiment configuration, read from a TOML file with one table per stage.
//! Every key has a default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abr::{AbrKind, DEFAULT_HORIZON};
use crate::emulator::{VideoManifest, DEFAULT_CHUNK_DURATION};
use crate::energy::RrcConfig;
use crate::error::{Error, Result};
use crate::predictor::{FineTuneStrategy, TrainConfig};
use crate::rl::TrainSpec;
use crate::trace::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory for every command.
    pub out: PathBuf,
    /// Base process for scenario traces; the grid overrides level,
    /// noise and handover rate per cell.
    pub synth: SynthConfig,
    pub grid: GridConfig,
    pub manifest: ManifestConfig,
    pub rrc: RrcConfig,
    pub predictor: PredictorConfig,
    pub rl: TrainSpec,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("out"),
            synth: SynthConfig {
                duration: 900.0,
                sample_period: 1.0,
                ar_coefficient: 0.9,
                speed_kmh: 60.0,
                distance_gain: 0.3,
                ..SynthConfig::default()
            },
            grid: GridConfig::default(),
            manifest: ManifestConfig::default(),
            rrc: RrcConfig::default(),
            predictor: PredictorConfig::default(),
            rl: TrainSpec::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// Scenario axes. Each cell is one (load, volatility, handover rate) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Mean throughput per load level, Mbit/s.
    pub loads: Vec<f64>,
    /// Innovation standard deviation as a fraction of the mean level.
    pub volatility: Vec<f64>,
    /// Handover events per second.
    pub handover_rates: Vec<f64>,
    /// Evaluation traces per cell.
    pub traces_per_cell: usize,
    /// Training traces per cell (disjoint seeds from evaluation).
    pub train_traces_per_cell: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            loads: vec![6.0, 10.0, 16.0],
            volatility: vec![0.1, 0.25, 0.4],
            handover_rates: vec![0.02],
            traces_per_cell: 1,
            train_traces_per_cell: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestConfig {
    /// JSON manifest; when unset a synthetic one is built from the keys below.
    pub path: Option<PathBuf>,
    pub chunks: usize,
    pub chunk_duration: f64,
    pub seed: u64,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        ManifestConfig { path: None, chunks: 48, chunk_duration: DEFAULT_CHUNK_DURATION, seed: 3 }
    }
}

impl ManifestConfig {
    pub fn build(&self) -> Result<VideoManifest> {
        match &self.path {
            Some(p) => VideoManifest::load(p),
            None => VideoManifest::synthetic(self.chunks, self.chunk_duration, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// History length H, samples.
    pub history: usize,
    /// Prediction window W, samples.
    pub window: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// `all` or one of weight-transfer, last-layer, all-layers.
    pub strategy: String,
    pub train: TrainConfig,
    /// Source-domain process and the number of traces drawn from it.
    pub source: SynthConfig,
    pub source_traces: usize,
    /// Target-domain process and the number of traces drawn from it.
    pub target: SynthConfig,
    pub target_traces: usize,
    /// Checkpoint used as the slot forecaster by train-rl, simulate and
    /// compare. Unset means harmonic mean of recent samples.
    pub checkpoint: Option<PathBuf>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            history: 15,
            window: 15,
            hidden: vec![32, 32],
            dropout: 0.2,
            strategy: "all".into(),
            train: TrainConfig { epochs: 12, ..TrainConfig::default() },
            source: SynthConfig {
                duration: 4000.0,
                mean_throughput: 20.0,
                ar_coefficient: 0.97,
                noise_std: 1.5,
                handover_rate: 0.01,
                handover_dip_fraction: 0.6,
                distance_gain: 0.5,
                ..SynthConfig::default()
            },
            source_traces: 3,
            target: SynthConfig {
                duration: 4000.0,
                mean_throughput: 12.0,
                ar_coefficient: 0.95,
                noise_std: 1.2,
                handover_rate: 0.01,
                handover_dip_fraction: 0.7,
                distance_gain: 0.5,
                speed_kmh: 40.0,
                ..SynthConfig::default()
            },
            target_traces: 2,
            checkpoint: None,
        }
    }
}

impl PredictorConfig {
    /// Strategies selected by `strategy`.
    pub fn strategies(&self) -> Result<Vec<FineTuneStrategy>> {
        parse_strategies(&self.strategy)
    }
}

pub fn parse_strategies(s: &str) -> Result<Vec<FineTuneStrategy>> {
    if s == "all" {
        return Ok(FineTuneStrategy::ALL.to_vec());
    }
    FineTuneStrategy::parse(s)
        .map(|k| vec![k])
        .ok_or_else(|| Error::Config(format!("unknown strategy `{s}` (all, weight-transfer, last-layer, all-layers)")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub policies: Vec<String>,
    /// MPC lookahead.
    pub horizon: usize,
    /// Also draw SVG bar charts.
    pub svg: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            policies: ["bola", "rb", "fastmpc", "robustmpc", "rl"].map(String::from).to_vec(),
            horizon: DEFAULT_HORIZON,
            svg: true,
        }
    }
}

impl CompareConfig {
    pub fn kinds(&self) -> Result<Vec<AbrKind>> {
        self.policies
            .iter()
            .map(|p| AbrKind::parse(p).ok_or_else(|| Error::Config(format!("unknown policy `{p}`"))))
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.loads.is_empty() || g.volatility.is_empty() || g.handover_rates.is_empty() {
            return Err(Error::Config("grid axes must be nonempty".into()));
        }
        if g.loads.iter().chain(&g.volatility).chain(&g.handover_rates).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("grid values must be finite and >= 0".into()));
        }
        if g.traces_per_cell == 0 {
            return Err(Error::Config("traces_per_cell must be >= 1".into()));
        }
        self.synth.validate()?;
        self.rrc.validate()?;
        self.rl.validate()?;
        self.predictor.strategies()?;
        if self.predictor.history == 0 || self.predictor.window == 0 || self.predictor.hidden.is_empty() {
            return Err(Error::Config("predictor needs history, window and at least one layer".into()));
        }
        if self.compare.kinds()?.is_empty() {
            return Err(Error::Config("compare.policies must be nonempty".into()));
        }
        if self.compare.horizon == 0 {
            return Err(Error::Config("compare.horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_override_defaults() {
        let text = "seed = 7\n[grid]\nloads = [5, 9]\n[rl]\nworkers = 2\nreward_abs = false\n[rl.env]\nreward_abs = true\n[rrc]\ninactivity_timer = 3.0\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grid.loads, vec![5.0, 9.0]);
        assert_eq!(cfg.rl.workers, 2);
        assert!(cfg.rl.env.reward_abs);
        assert_eq!(cfg.rrc.inactivity_timer, 3.0);
        assert_eq!(cfg.rrc.power_connected, RrcConfig::default().power_connected);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[compare]\npolicies = [\"nope\"]").is_err());
        assert!(ExperimentConfig::from_toml("[predictor]\nstrategy = \"some\"").is_err());
        assert!(ExperimentConfig::from_toml("[grid]\nloads = []").is_err());
        assert!(ExperimentConfig::from_toml("[rl]\ngamma = 1.5").is_err());
    }
}
