use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVELS: usize = 6;

/// Default 8-second chunks.
pub const DEFAULT_CHUNK_DURATION: f64 = 8.0;

/// 144p..720p encoding ladder, Mbit/s.
pub const DEFAULT_LADDER: [(&str, f64); LEVELS] =
    [("144p", 0.3), ("270p", 0.75), ("360p", 1.2), ("480p", 1.85), ("570p", 2.85), ("720p", 4.3)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    pub bitrate_mbps: f64,
    /// Size of every chunk at this level, Mbit.
    pub sizes_mbit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    #[serde(default)]
    pub id: String,
    #[serde(rename = "chunk_duration_s")]
    pub chunk_duration: f64,
    pub levels: Vec<Level>,
}

impl VideoManifest {
    /// Ladder-based manifest whose chunk sizes vary with a shared per-chunk
    /// complexity factor, so sizes stay ordered across levels.
    pub fn synthetic(n_chunks: usize, chunk_duration: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(1.0, 0.1).expect("valid normal");
        let factors: Vec<f64> = (0..n_chunks).map(|_| {
            let f: f64 = noise.sample(&mut rng);
            f.clamp(0.7, 1.3)
        }).collect();
        let levels = DEFAULT_LADDER
            .iter()
            .map(|(label, rate)| Level {
                label: label.to_string(),
                bitrate_mbps: *rate,
                sizes_mbit: factors.iter().map(|f| rate * chunk_duration * f).collect(),
            })
            .collect();
        let m = VideoManifest { id: format!("synthetic-{n_chunks}x{chunk_duration}-{seed}"), chunk_duration, levels };
        m.validate()?;
        Ok(m)
    }

    /// Every chunk at exactly bitrate × duration.
    pub fn constant_bitrate(n_chunks: usize, chunk_duration: f64) -> Self {
        VideoManifest {
            id: format!("cbr-{n_chunks}x{chunk_duration}"),
            chunk_duration,
            levels: DEFAULT_LADDER
                .iter()
                .map(|(label, rate)| Level {
                    label: label.to_string(),
                    bitrate_mbps: *rate,
                    sizes_mbit: vec![rate * chunk_duration; n_chunks],
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() != LEVELS {
            return Err(Error::Invalid(format!("manifest must have {LEVELS} levels, has {}", self.levels.len())));
        }
        if !(self.chunk_duration > 0.0) {
            return Err(Error::Invalid("chunk duration must be > 0".into()));
        }
        if self.levels.windows(2).any(|w| !(w[0].bitrate_mbps < w[1].bitrate_mbps)) {
            return Err(Error::Invalid("ladder must be sorted by ascending bitrate".into()));
        }
        let n = self.levels[0].sizes_mbit.len();
        if n == 0 {
            return Err(Error::Invalid("manifest has no chunks".into()));
        }
        for l in &self.levels {
            if l.sizes_mbit.len() != n {
                return Err(Error::Invalid(format!("level {} lists {} chunk sizes, expected {n}", l.label, l.sizes_mbit.len())));
            }
            if l.sizes_mbit.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::Invalid(format!("level {} has a non-positive chunk size", l.label)));
            }
        }
        Ok(())
    }

    pub fn n_chunks(&self) -> usize {
        self.levels[0].sizes_mbit.len()
    }

    pub fn bitrates(&self) -> [f64; LEVELS] {
        std::array::from_fn(|m| self.levels[m].bitrate_mbps)
    }

    /// Sizes of chunk `index` at every level, Mbit.
    pub fn chunk_sizes(&self, index: usize) -> [f64; LEVELS] {
        std::array::from_fn(|m| self.levels[m].sizes_mbit[index])
    }

    pub fn video_duration(&self) -> f64 {
        self.n_chunks() as f64 * self.chunk_duration
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: VideoManifest =
            serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("manifest {}: {e}", path.display())))?;
        if m.id.is_empty() {
            m.id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
