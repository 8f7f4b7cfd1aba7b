//! Advantage actor-critic training of the two decision engines.
//!
//! Training alternates blocks: the buffer engine learns against a frozen
//! greedy bitrate engine, then the bitrate engine against a frozen greedy
//! buffer engine. Each round runs one rollout per worker in parallel from a
//! snapshot of the weights; gradients are then applied one worker at a time
//! in worker order, so results do not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{run_episode, EnvConfig, Episode, RlBitrate, RlBuffer, Trajectory};
use super::model::{ActionMode, EngineKind, NetConfig, PolicyModel, RewardNorm};
use super::nn::{actor_logit_grad, entropy, softmax};
use crate::emulator::{Forecaster, VideoManifest};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::trace::ThroughputTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub workers: usize,
    /// Total episodes over both engines.
    pub episodes: usize,
    /// Number of buffer-then-bitrate block pairs.
    pub outer_iterations: usize,
    /// Share of each iteration's episodes given to the buffer engine.
    pub buffer_share: f64,
    /// Bitrate-engine rewards are per-chunk QoE divided by this.
    pub bitrate_reward_scale: f64,
    pub seed: u64,
    pub net: NetConfig,
    pub env: EnvConfig,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            gamma: 0.9,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            entropy_start: 1.0,
            entropy_end: 0.1,
            workers: 4,
            episodes: 2000,
            outer_iterations: 2,
            buffer_share: 0.4,
            bitrate_reward_scale: 4.3,
            seed: 0,
            net: NetConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Invalid(format!("discount must lie in (0, 1), got {}", self.gamma)));
        }
        if self.workers == 0 || self.outer_iterations == 0 {
            return Err(Error::Invalid("workers and outer_iterations must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.buffer_share) {
            return Err(Error::Invalid("buffer_share must lie in [0, 1]".into()));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.bitrate_reward_scale > 0.0) {
            return Err(Error::Invalid("learning rates and reward scale must be > 0".into()));
        }
        Ok(())
    }

    /// (buffer, bitrate) episode counts per outer iteration.
    pub fn block_sizes(&self) -> (usize, usize) {
        let per = self.episodes / self.outer_iterations;
        let buffer = (per as f64 * self.buffer_share).round() as usize;
        (buffer, per - buffer)
    }
}

/// Linear decay from `start` to `end` over `total` episodes.
pub fn entropy_weight(start: f64, end: f64, episode: usize, total: usize) -> f64 {
    if total <= 1 {
        return end;
    }
    let f = (episode as f64 / (total - 1) as f64).min(1.0);
    start + (end - start) * f
}

/// Discounted returns, bootstrapped with 0 after the last step.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub engine: EngineKind,
    /// Index among this engine's episodes.
    pub episode: usize,
    pub trace: usize,
    pub steps: usize,
    /// Sum of the rewards the engine was trained on.
    pub reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

pub struct Trained {
    pub buffer: PolicyModel,
    pub bitrate: PolicyModel,
    pub history: Vec<EpisodeStat>,
}

/// Accumulated gradients for one episode.
pub struct Update {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

/// Policy-gradient and value-regression gradients for one trajectory,
/// averaged over its steps.
pub fn episode_gradients(model: &PolicyModel, traj: &Trajectory, rewards: &[f64], gamma: f64, beta: f64) -> Result<Update> {
    if traj.len() != rewards.len() {
        return Err(Error::Dimension { expected: format!("{} rewards", traj.len()), actual: rewards.len().to_string() });
    }
    let returns = discounted_returns(rewards, gamma);
    let n = traj.len().max(1) as f64;
    let mut up = Update {
        actor: vec![0.0; model.actor.n_params()],
        critic: vec![0.0; model.critic.n_params()],
        actor_loss: 0.0,
        critic_loss: 0.0,
        entropy: 0.0,
    };
    for ((x, a), g) in traj.iter().zip(&returns) {
        let vc = model.critic.forward(x)?;
        let v = vc.output[0];
        let ac = model.actor.forward(x)?;
        let p = softmax(&ac.output);
        let adv = g - v;
        let h = entropy(&p);
        up.actor_loss += (-adv * p[*a].max(1e-300).ln() - beta * h) / n;
        up.critic_loss += 0.5 * (g - v) * (g - v) / n;
        up.entropy += h / n;
        let d_logits: Vec<f64> = actor_logit_grad(&p, *a, adv, beta).iter().map(|d| d / n).collect();
        model.actor.backward(&ac, &d_logits, &mut up.actor);
        model.critic.backward(&vc, &[(v - g) / n], &mut up.critic);
    }
    Ok(up)
}

/// Engine-level optimizer pair.
struct Learner {
    model: PolicyModel,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
}

impl Learner {
    fn new(model: PolicyModel, spec: &TrainSpec) -> Self {
        let actor_opt = Optimizer::new(OptimizerKind::adam(), spec.lr_actor, model.actor.n_params());
        let critic_opt = Optimizer::new(OptimizerKind::adam(), spec.lr_critic, model.critic.n_params());
        Learner { model, actor_opt, critic_opt }
    }

    fn apply(&mut self, up: &Update, episode: usize) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !up.actor_loss.is_finite() || !up.critic_loss.is_finite() || !finite(&up.actor) || !finite(&up.critic) {
            return Err(Error::Diverged { epoch: episode });
        }
        self.actor_opt.step(&mut self.model.actor.params, &up.actor, None);
        self.critic_opt.step(&mut self.model.critic.params, &up.critic, None);
        Ok(())
    }
}

struct Rollout {
    episode: Episode,
    traj: Trajectory,
    trace: usize,
}

fn episode_seed(seed: u64, engine: EngineKind, episode: usize) -> u64 {
    let tag = match engine {
        EngineKind::Buffer => 0x42,
        EngineKind::Bitrate => 0x8b,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (tag << 56) ^ episode as u64
}

#[allow(clippy::too_many_arguments)]
fn rollout(
    engine: EngineKind,
    buffer: &PolicyModel,
    bitrate: &PolicyModel,
    manifest: &VideoManifest,
    traces: &[ThroughputTrace],
    trace: usize,
    forecaster: Option<&dyn Forecaster>,
    spec: &TrainSpec,
    seed: u64,
) -> Result<Rollout> {
    let (bmode, rmode) = match engine {
        EngineKind::Buffer => (ActionMode::Sample, ActionMode::Greedy),
        EngineKind::Bitrate => (ActionMode::Greedy, ActionMode::Sample),
    };
    let mut bp = RlBuffer::new(buffer, bmode, &spec.env, seed);
    let mut rp = RlBitrate::new(bitrate, rmode, seed ^ 1);
    match engine {
        EngineKind::Buffer => bp.record = Some(Vec::new()),
        EngineKind::Bitrate => rp.record = Some(Vec::new()),
    }
    let paired = engine == EngineKind::Buffer;
    let episode = run_episode(manifest, &traces[trace], &mut rp, Some(&mut bp), forecaster, &spec.env, paired)?;
    let traj = match engine {
        EngineKind::Buffer => bp.record.take(),
        EngineKind::Bitrate => rp.record.take(),
    }
    .unwrap_or_default();
    Ok(Rollout { episode, traj, trace })
}

/// Per-chunk bitrate-engine rewards.
pub fn bitrate_rewards(episode: &Episode, spec: &TrainSpec) -> Vec<f64> {
    let mut prev = None;
    episode
        .log
        .chunks
        .iter()
        .map(|c| {
            let r = crate::emulator::chunk_qoe(prev, c.bitrate_mbps, c.rebuffer, spec.env.qoe);
            prev = Some(c.bitrate_mbps);
            r / spec.bitrate_reward_scale
        })
        .collect()
}

/// Train both engines on `traces`. `progress` sees every finished episode.
pub fn train_engines(
    manifest: &VideoManifest,
    traces: &[ThroughputTrace],
    forecaster: Option<&dyn Forecaster>,
    spec: &TrainSpec,
    mut progress: impl FnMut(&EpisodeStat),
) -> Result<Trained> {
    spec.validate()?;
    if traces.is_empty() {
        return Err(Error::Invalid("training needs at least one trace".into()));
    }
    let mut buffer = Learner::new(PolicyModel::new(EngineKind::Buffer, &spec.net, spec.seed)?, spec);
    let mut bitrate = Learner::new(PolicyModel::new(EngineKind::Bitrate, &spec.net, spec.seed.wrapping_add(1))?, spec);
    let mut norm = RewardNorm::default();
    let (nb, nr) = spec.block_sizes();
    let totals = (nb * spec.outer_iterations, nr * spec.outer_iterations);
    let mut counters = (0usize, 0usize);
    let mut history = Vec::new();
    let mut next_trace = 0usize;

    for _ in 0..spec.outer_iterations {
        for (engine, block) in [(EngineKind::Buffer, nb), (EngineKind::Bitrate, nr)] {
            let mut done = 0;
            while done < block {
                let batch = spec.workers.min(block - done);
                let base = match engine {
                    EngineKind::Buffer => counters.0,
                    EngineKind::Bitrate => counters.1,
                };
                let jobs: Vec<(usize, usize)> =
                    (0..batch).map(|w| (base + w, (next_trace + w) % traces.len())).collect();
                next_trace = (next_trace + batch) % traces.len();
                let (bm, rm) = (&buffer.model, &bitrate.model);
                let rollouts: Vec<Result<Rollout>> = jobs
                    .par_iter()
                    .map(|&(ep, tr)| rollout(engine, bm, rm, manifest, traces, tr, forecaster, spec, episode_seed(spec.seed, engine, ep)))
                    .collect();
                for (k, r) in rollouts.into_iter().enumerate() {
                    let r = r?;
                    let ep = base + k;
                    let (learner, total) = match engine {
                        EngineKind::Buffer => (&mut buffer, totals.0),
                        EngineKind::Bitrate => (&mut bitrate, totals.1),
                    };
                    let rewards = match engine {
                        EngineKind::Buffer => {
                            for (s, e) in r.episode.slots.iter().zip(r.episode.energy_terms(spec.env.reward_abs)) {
                                norm.qoe.push(s.qoe);
                                norm.energy.push(e);
                            }
                            r.episode.rewards(&norm, &spec.env)
                        }
                        EngineKind::Bitrate => bitrate_rewards(&r.episode, spec),
                    };
                    let beta = entropy_weight(spec.entropy_start, spec.entropy_end, ep, total);
                    let up = episode_gradients(&learner.model, &r.traj, &rewards, spec.gamma, beta)?;
                    learner.apply(&up, ep)?;
                    let stat = EpisodeStat {
                        engine,
                        episode: ep,
                        trace: r.trace,
                        steps: r.traj.len(),
                        reward: rewards.iter().sum(),
                        actor_loss: up.actor_loss,
                        critic_loss: up.critic_loss,
                        entropy: up.entropy,
                    };
                    progress(&stat);
                    history.push(stat);
                }
                match engine {
                    EngineKind::Buffer => counters.0 += batch,
                    EngineKind::Bitrate => counters.1 += batch,
                }
                done += batch;
            }
        }
    }
    buffer.model.reward_norm = norm;
    bitrate.model.reward_norm = norm;
    Ok(Trained { buffer: buffer.model, bitrate: bitrate.model, history })
}
