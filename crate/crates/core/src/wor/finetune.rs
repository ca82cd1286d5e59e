use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::corrupt::{corrupt_sentence, CorruptionConfig};
use super::labels::{decode_labels, repair_labels, span_prf, BieoLabeling, Prf, Tag};
use crate::error::{Error, Result};
use crate::model::{argmax_rows, EncoderState, Forward, TAG_CLASSES};
use crate::seed::{self, stream};
use crate::tensor::{adam_step, clip_global_norm, lr_at, AdamState, Graph, LrSchedule, Var};
use crate::tokenizer::{tokenize_word, Vocab};

/// Fine-tuning hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub steps: u64,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub max_len: usize,
}

impl Default for WorConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            batch_size: 16,
            steps: 400,
            warmup_steps: 40,
            peak_lr: 1e-3,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
            max_len: 32,
        }
    }
}

impl WorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_len < 3 || self.warmup_steps > self.steps {
            return Err(Error::Config(
                "batch_size must be positive, max_len at least 3 and warmup_steps at most steps".into(),
            ));
        }
        Ok(())
    }
}

/// A labeled sentence laid out for the encoder: `[CLS] tokens [SEP]`,
/// padded to `max_len`. The specials are tagged `O`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggerInput {
    pub input_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub pad_mask: Vec<bool>,
    pub labels: Vec<Tag>,
    /// Number of sentence tokens kept after truncation.
    pub kept: usize,
}

/// Token ids for a labeling. Tokens outside the vocabulary map to
/// `[UNK]`; sentences longer than `max_len - 2` tokens are cut and their
/// labels repaired.
pub fn encode_tagged(labeling: &BieoLabeling, vocab: &Vocab, max_len: usize) -> TaggerInput {
    let kept = labeling.tokens.len().min(max_len.saturating_sub(2));
    let mut input_ids = vec![vocab.cls_id()];
    input_ids.extend(labeling.tokens[..kept].iter().map(|t| vocab.id(t).unwrap_or(vocab.unk_id())));
    input_ids.push(vocab.sep_id());
    let mut labels = vec![Tag::O];
    labels.extend(repair_labels(&labeling.labels[..kept]));
    labels.push(Tag::O);
    let real = input_ids.len();
    input_ids.resize(max_len.max(real), vocab.pad_id());
    labels.resize(input_ids.len(), Tag::O);
    let mut pad_mask = vec![false; real];
    pad_mask.resize(input_ids.len(), true);
    TaggerInput {
        segment_ids: vec![0; input_ids.len()],
        input_ids,
        pad_mask,
        labels,
        kept,
    }
}

/// Splits words into vocabulary pieces, for labeling at token level.
pub fn wordpiece_pieces(vocab: &Vocab) -> impl Fn(&str) -> Vec<String> + '_ {
    move |w| tokenize_word(w, vocab)
}

/// Corrupts every sentence (seeded by `(seed, WOR, index)`) and labels it
/// at token level. Sentences under three words are skipped.
pub fn build_wor_corpus(
    sentences: &[Vec<String>],
    cfg: &CorruptionConfig,
    pieces: impl Fn(&str) -> Vec<String>,
    seed: u64,
) -> Vec<BieoLabeling> {
    sentences
        .iter()
        .enumerate()
        .filter_map(|(i, words)| {
            let mut rng = seed::rng(seed, &[stream::WOR, i as u64]);
            let (corrupted, moves, _) = corrupt_sentence(words, cfg, &mut rng)?;
            Some(super::encode_labels(words, &corrupted, &moves, &pieces).expect("labels follow the moves"))
        })
        .collect()
}

fn tag_logits(fwd: &mut Forward, x: &TaggerInput) -> Result<Var> {
    let h = fwd.encoder(&x.input_ids, &x.segment_ids, &x.pad_mask)?;
    fwd.tagger_logits(h)
}

/// Non-pad rows of the logits and their tag indices.
fn real_rows(g: &mut Graph, logits: Var, x: &TaggerInput) -> Result<(Var, Vec<usize>)> {
    let rows: Vec<usize> = (0..x.pad_mask.len()).filter(|&i| !x.pad_mask[i]).collect();
    let targets = rows.iter().map(|&i| x.labels[i].index()).collect();
    Ok((g.gather_rows(logits, &rows)?, targets))
}

/// Adds a fresh tagging layer to `state` and trains every parameter with
/// per-token cross-entropy over non-pad positions. Inputs are the
/// corrupted sentences as they are; no permutation is applied.
pub fn wor_finetune(state: EncoderState, train: &[BieoLabeling], vocab: &Vocab, cfg: &WorConfig) -> Result<EncoderState> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no labeled training sentences".into()));
    }
    if vocab.len() > state.config.vocab_size || cfg.max_len > state.config.max_positions {
        return Err(Error::Config("vocabulary or max_len exceeds the encoder's tables".into()));
    }
    let inputs: Vec<TaggerInput> = train.iter().map(|l| encode_tagged(l, vocab, cfg.max_len)).collect();
    let mut state = state.with_tagger(&mut seed::rng(cfg.seed, &[stream::WOR, u64::MAX, 0]));
    let mut adam = AdamState::new(&state.params, 0.9, 0.999, 1e-6, cfg.weight_decay);
    let schedule = LrSchedule {
        peak_lr: cfg.peak_lr,
        warmup_steps: cfg.warmup_steps,
        total_steps: cfg.steps,
    };
    let per_epoch = inputs.len().div_ceil(cfg.batch_size) as u64;
    let mut order: Vec<usize> = Vec::new();
    for step in 0..cfg.steps {
        let epoch = step / per_epoch;
        if step % per_epoch == 0 {
            order = (0..inputs.len()).collect();
            order.shuffle(&mut seed::rng(cfg.seed, &[stream::WOR, u64::MAX, 1, epoch]));
        }
        let b = (step % per_epoch) as usize * cfg.batch_size;
        let batch = &order[b..(b + cfg.batch_size).min(order.len())];

        let mut g = Graph::new();
        let bound = state.bind(&mut g, true);
        let mut rng = seed::rng(cfg.seed, &[stream::WOR, u64::MAX, 2, step]);
        let mut parts = Vec::new();
        let mut targets = Vec::new();
        {
            let mut fwd = Forward { state: &state, graph: &mut g, params: &bound, rng: &mut rng, training: true };
            for &i in batch {
                let logits = tag_logits(&mut fwd, &inputs[i])?;
                let (rows, t) = real_rows(fwd.graph, logits, &inputs[i])?;
                parts.push(rows);
                targets.extend(t);
            }
        }
        let logits = if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts)? };
        let loss = g.cross_entropy(logits, &targets)?;
        if !g.value(loss).item().is_finite() {
            return Err(Error::Divergence { name: "tagging loss".into(), step });
        }
        g.backward(loss)?;
        let mut grads = state.collect_grads(&g, &bound);
        if let Some(c) = cfg.grad_clip {
            clip_global_norm(&mut grads, c);
        }
        adam_step(&mut state.params, &grads, &mut adam, lr_at(&schedule, step))?;
    }
    Ok(state)
}

/// Predicted tags for each labeling's tokens (after truncation), repaired
/// to well-formed spans.
pub fn wor_predict(state: &EncoderState, data: &[BieoLabeling], vocab: &Vocab, max_len: usize) -> Result<Vec<Vec<Tag>>> {
    let mut rng = seed::rng(0, &[stream::WOR]);
    data.iter()
        .map(|l| {
            let x = encode_tagged(l, vocab, max_len);
            let mut g = Graph::new();
            let bound = state.bind(&mut g, false);
            let logits = {
                let mut fwd = Forward { state, graph: &mut g, params: &bound, rng: &mut rng, training: false };
                tag_logits(&mut fwd, &x)?
            };
            let value = g.value(logits);
            debug_assert_eq!(value.cols(), TAG_CLASSES);
            let tags: Vec<Tag> = argmax_rows(value)[1..1 + x.kept]
                .iter()
                .map(|&i| Tag::from_index(i).expect("four classes"))
                .collect();
            Ok(repair_labels(&tags))
        })
        .collect()
}

/// Span scores plus token accuracy and the fraction of sentences whose
/// decoded order matches the gold decoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorReport {
    pub sentences: usize,
    pub spans: Prf,
    pub token_accuracy: f64,
    pub sentence_recovery: f64,
}

pub fn wor_evaluate(state: &EncoderState, data: &[BieoLabeling], vocab: &Vocab, max_len: usize) -> Result<WorReport> {
    if data.is_empty() {
        return Err(Error::Config("no labeled evaluation sentences".into()));
    }
    let predicted = wor_predict(state, data, vocab, max_len)?;
    let gold: Vec<Vec<Tag>> = data
        .iter()
        .zip(&predicted)
        .map(|(l, p)| repair_labels(&l.labels[..p.len()]))
        .collect();
    let spans = span_prf(&gold, &predicted)?;
    let (mut hits, mut total, mut recovered) = (0usize, 0usize, 0usize);
    for ((l, g), p) in data.iter().zip(&gold).zip(&predicted) {
        hits += g.iter().zip(p).filter(|(a, b)| a == b).count();
        total += g.len();
        let tokens = l.tokens[..p.len()].to_vec();
        let want = decode_labels(&BieoLabeling { tokens: tokens.clone(), labels: g.clone() });
        let got = decode_labels(&BieoLabeling { tokens, labels: p.clone() });
        recovered += usize::from(want == got);
    }
    Ok(WorReport {
        sentences: data.len(),
        spans,
        token_accuracy: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        sentence_recovery: recovered as f64 / data.len() as f64,
    })
}
