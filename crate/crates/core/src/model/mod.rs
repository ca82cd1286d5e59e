//! Transformer encoder with the PerLM position and vocabulary heads and
//! the WOR tagging layer.

mod config;
mod forward;
mod state;

pub use config::ModelConfig;
pub use forward::{argmax_rows, Forward, PerlmOutput};
pub use state::{BoundParams, EncoderState, LayerVars, TAG_CLASSES};
