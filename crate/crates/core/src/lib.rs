//! Latent-state gait learning on a planar biped.
//!
//! The pipeline: a model-based foot-placement planner walks the simulated biped to
//! collect gait data, an autoencoder compresses the stance-frame full-order state to a
//! small latent vector, and a PPO policy acting on that latent state chooses swing-foot
//! landing targets and base-velocity offsets that a task-space controller tracks.

pub mod ae;
pub mod config;
pub mod control;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod planner;
pub mod rl;
pub mod sim;

pub use error::{Error, Result};
