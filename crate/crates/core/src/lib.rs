//! Permuted language model (PerLM) pre-training at desk scale.
//!
//! - [`tensor`]: `f64` tensors, reverse-mode differentiation, Adam and the
//!   warmup schedule.
//! - [`tokenizer`]: WordPiece with word and sentence boundary metadata.
//! - [`perlm`]: span selection, permutation and position targets.
//! - [`model`]: transformer encoder with position and vocabulary heads.
//! - [`harness`]: batching, training, evaluation, checkpoints, ablations.
//! - [`wor`]: word order recovery with BIEO tagging.

pub mod error;
pub mod harness;
pub mod jsonl;
pub mod seed;
pub mod tensor;
pub mod model;
pub mod perlm;
pub mod tokenizer;
pub mod toy;
pub mod wor;

pub use error::{Error, Result};
pub use tensor::{Graph, Tensor, Var};
