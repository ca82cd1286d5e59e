//! PerLM instance generation: whole-word n-gram selection, permutation of
//! the selected tokens inside granularity cells, and position targets.

mod config;
mod corpus;
mod instance;
mod io;
mod permute;
mod render;
mod spans;
mod stats;

pub use config::{Granularity, MaskingConfig, PredictionScope, PredictionSpace, TargetSemantics};
pub use corpus::{
    generate_instances, parse_corpus, read_corpus, sentence_chunks, split_pair, tokenize_document, Document,
};
pub use instance::{PerLMInstance, RowKind};
pub use io::{deserialize_instance, read_instances, serialize_instance, write_instances};
pub use permute::{
    apply_granularity, apply_permutation, build_pair_instance, build_pair_instance_traced,
    expand_prediction_scope, permute_selected, GenerationTrace,
};
pub use render::{format_arrow, instance_at, parse_arrows, render_instance};
pub use spans::{select_spans, select_spans_budgeted, SelectionSpan};
pub use stats::{CorpusStats, StatsSummary};
