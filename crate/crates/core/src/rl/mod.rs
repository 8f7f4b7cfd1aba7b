//! Cascaded learned controllers: a per-slot buffer-cap engine and a
//! per-chunk bitrate engine, trained with advantage actor-critic.

pub mod env;
pub mod model;
pub mod nn;
pub mod state;
pub mod train;

pub use env::{run_episode, EnvConfig, Episode, RandomBitrate, RandomBuffer, RlBitrate, RlBuffer, SlotOutcome, Trajectory};
pub use model::{ActionMode, EngineKind, NetConfig, PolicyModel, PolicyOutput, RewardNorm, RunningStats};
pub use state::{apply_buffer_action, buffer_reward, CapBounds, BUFFER_ACTIONS};
pub use train::{entropy_weight, train_engines, EpisodeStat, TrainSpec, Trained};
