//! Trace-driven laboratory for energy-aware adaptive bitrate streaming.
// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod abr;
pub mod checkpoint;
pub mod config;
pub mod emulator;
pub mod energy;
pub mod experiment;
pub mod error;
pub mod optim;
pub mod predictor;
pub mod rl;
pub mod trace;

pub use error::{Error, Result};
