//! Minimal differentiable-programming toolkit shared by the tokenizer and the transformer.

mod adam;
pub mod checkpoint;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{Grads, ParamId, ParamStore};
pub use tape::{softmax_rows, AttnSpec, ConvLayout, Tape, Var};
