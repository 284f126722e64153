//! A small reverse-mode autodiff engine and the MLP/Adam trainer built on it.

mod adam;
mod mlp;
mod tape;

pub use adam::AdamState;
pub use mlp::{Activation, Mlp, MlpConfig};
pub use tape::{Gradients, Tape, Tensor, Var, NORM_EPS};
