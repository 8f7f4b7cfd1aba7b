use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{argmax, softmax, Net, NetSpec};
use super::state::{bitrate_layout, buffer_layout, BUFFER_ACTIONS};
use crate::checkpoint::{Checkpoint, Tensor};
use crate::emulator::LEVELS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// Chooses the buffer cap once per slot.
    Buffer,
    /// Chooses the bitrate of each chunk.
    Bitrate,
}

impl EngineKind {
    pub fn actions(self) -> usize {
        match self {
            EngineKind::Buffer => BUFFER_ACTIONS.len(),
            EngineKind::Bitrate => LEVELS,
        }
    }

    fn checkpoint_kind(self) -> &'static str {
        match self {
            EngineKind::Buffer => "policy-buffer",
            EngineKind::Bitrate => "policy-bitrate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub filters: usize,
    pub kernel: usize,
    pub scalar_units: usize,
    pub hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { filters: 128, kernel: 4, scalar_units: 128, hidden: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt().max(1e-6)
        }
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }
}

/// Running statistics of the two buffer-reward terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardNorm {
    pub qoe: RunningStats,
    pub energy: RunningStats,
}

/// Actor and critic for one decision engine.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub kind: EngineKind,
    pub actor: Net,
    pub critic: Net,
    /// Frozen reward statistics (buffer engine only).
    pub reward_norm: RewardNorm,
}

/// Policy output for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    pub value: f64,
}

impl PolicyModel {
    pub fn spec_for(kind: EngineKind, net: &NetConfig, outputs: usize) -> NetSpec {
        let (vectors, scalars) = match kind {
            EngineKind::Buffer => buffer_layout(),
            EngineKind::Bitrate => bitrate_layout(),
        };
        NetSpec {
            vectors,
            scalars,
            filters: net.filters,
            kernel: net.kernel,
            scalar_units: net.scalar_units,
            hidden: net.hidden,
            outputs,
        }
    }

    pub fn new(kind: EngineKind, net: &NetConfig, seed: u64) -> Result<Self> {
        Ok(PolicyModel {
            kind,
            actor: Net::new(Self::spec_for(kind, net, kind.actions()), seed, 0.1)?,
            critic: Net::new(Self::spec_for(kind, net, 1), seed.wrapping_add(7919), 0.1)?,
            reward_norm: RewardNorm::default(),
        })
    }

    pub fn zeros(kind: EngineKind, net: &NetConfig) -> Result<Self> {
        Ok(PolicyModel {
            kind,
            actor: Net::zeros(Self::spec_for(kind, net, kind.actions()))?,
            critic: Net::zeros(Self::spec_for(kind, net, 1))?,
            reward_norm: RewardNorm::default(),
        })
    }

    pub fn input_len(&self) -> usize {
        self.actor.spec.input_len()
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.actor.forward(state)?.output))
    }

    pub fn forward(&self, state: &[f64]) -> Result<PolicyOutput> {
        Ok(PolicyOutput { probs: self.probabilities(state)?, value: self.critic.forward(state)?.output[0] })
    }

    /// Greedy takes the most likely action (lowest index on ties).
    pub fn act<R: Rng>(&self, state: &[f64], mode: ActionMode, rng: &mut R) -> Result<usize> {
        let p = self.probabilities(state)?;
        Ok(match mode {
            ActionMode::Greedy => argmax(&p),
            ActionMode::Sample => sample_index(&p, rng),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let s = &self.actor.spec;
        let mut ckpt = Checkpoint::new(self.kind.checkpoint_kind(), vec![s.input_len(), s.concat_len(), s.hidden, s.outputs]);
        ckpt.meta = serde_json::json!({
            "actor_spec": self.actor.spec,
            "critic_spec": self.critic.spec,
            "reward_norm": self.reward_norm,
        });
        ckpt.tensors.push(Tensor::new("actor", vec![self.actor.n_params()], self.actor.params.clone()));
        ckpt.tensors.push(Tensor::new("critic", vec![self.critic.n_params()], self.critic.params.clone()));
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, kind: EngineKind) -> Result<Self> {
        ckpt.expect_kind(kind.checkpoint_kind())?;
        let field = |name: &str| -> Result<serde_json::Value> {
            ckpt.meta.get(name).cloned().ok_or_else(|| Error::Checkpoint(format!("missing meta `{name}`")))
        };
        let parse = |v: serde_json::Value| -> Result<NetSpec> {
            serde_json::from_value(v).map_err(|e| Error::Checkpoint(e.to_string()))
        };
        let actor_spec = parse(field("actor_spec")?)?;
        let critic_spec = parse(field("critic_spec")?)?;
        let reward_norm: RewardNorm =
            serde_json::from_value(field("reward_norm")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut actor = Net::zeros(actor_spec)?;
        let mut critic = Net::zeros(critic_spec)?;
        for (name, net) in [("actor", &mut actor), ("critic", &mut critic)] {
            let t = ckpt.tensor(name)?;
            if t.data.len() != net.n_params() {
                return Err(Error::Checkpoint(format!("tensor `{name}` has {} values, expected {}", t.data.len(), net.n_params())));
            }
            net.params.copy_from_slice(&t.data);
        }
        if actor.spec.outputs != kind.actions() || critic.spec.outputs != 1 {
            return Err(Error::Checkpoint("network output sizes do not match the engine".into()));
        }
        Ok(PolicyModel { kind, actor, critic, reward_norm })
    }
}

/// Draw an index from a probability vector.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
