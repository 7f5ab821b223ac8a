//! Long-sequence packed image encoder.
//!
//! Hybrid linear/softmax attention, autonomy-of-experts feed-forward layers,
//! dense learnable residuals, greedy sample packing with block masks and
//! size embeddings, and the contrastive/distillation training math, all on a
//! small 64-bit tensor library with reverse-mode differentiation.

pub mod aoe;
pub mod attention;
pub mod encoder;
pub mod error;
pub mod packing;
pub mod rng;
pub mod tensor;
pub mod training_math;

pub use error::{Error, Result};
pub use tensor::{Eager, GradTape, Ops, Tensor, Var};
