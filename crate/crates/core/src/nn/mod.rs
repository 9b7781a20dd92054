//! Dense-network machinery shared by the autoencoder and the PPO networks.
//!
//! Everything is `f64` and row-major: a batch is a `[B x d]` matrix, layer
//! weights are `[out x in]`. Gradients reuse the [`Mlp`] type so optimizer
//! state, parameters and gradients always share one shape.

mod adam;
mod checkpoint;
mod loss;
mod mlp;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{read_mlp, read_mlp_bytes, write_mlp, write_mlp_bytes, CHECKPOINT_VERSION};
pub use loss::mse_loss;
pub use mlp::{Activation, Activations, Layer, Mlp};
