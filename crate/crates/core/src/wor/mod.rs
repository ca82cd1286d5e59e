//! Word order recovery: sentences with displaced words, BIEO tagging,
//! span decoding and span-level scoring, and a tagging fine-tune on top of
//! the encoder.

mod corrupt;
mod finetune;
mod labels;

pub use corrupt::{apply_moves, corrupt_sentence, encode_labels, sample_moves, CorruptionConfig, WordMove};
pub use finetune::{
    build_wor_corpus, encode_tagged, wor_evaluate, wor_finetune, wor_predict, wordpiece_pieces, TaggerInput,
    WorConfig, WorReport,
};
pub use labels::{decode_labels, extract_spans, repair_labels, span_prf, BieoLabeling, Prf, Tag, WorSpan};

use std::path::Path;

use crate::error::Result;
use crate::jsonl;

/// Labeled-data file: one `{"tokens": [...], "labels": [...]}` per line.
pub fn read_labeled(path: impl AsRef<Path>) -> Result<Vec<BieoLabeling>> {
    let records: Vec<BieoLabeling> = jsonl::read_jsonl(path)?;
    for (i, r) in records.iter().enumerate() {
        if r.tokens.len() != r.labels.len() {
            return Err(crate::Error::Data(format!("record {}: tokens and labels differ in length", i + 1)));
        }
    }
    Ok(records)
}

pub fn write_labeled(path: impl AsRef<Path>, records: &[BieoLabeling]) -> Result<()> {
    jsonl::write_jsonl(path, records)
}
