//! Layers and the optimizer shared by the backbone and the policies.

mod adam;
mod layers;

pub use adam::{clip_grad_norm, collect_grads, Adam, AdamConfig};
pub use layers::{uniform_init, Linear, Mlp, ValueNet};
