use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{floor_ratio, Granularity, MaskingConfig, PredictionScope, TargetSemantics};
use super::instance::{PerLMInstance, RowKind};
use super::spans::{select_spans_budgeted, SelectionSpan};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenizedSequence, Vocab};

/// Counts gathered while generating one instance; summed into corpus
/// statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub words: usize,
    pub selected_words: usize,
    pub selected_tokens: usize,
    pub shuffled_tokens: usize,
    /// Sampled gram length of every span.
    pub gram_lengths: Vec<usize>,
}

/// Selection and permutation of one segment, in segment coordinates.
#[derive(Debug)]
struct SegmentPlan {
    permuted: Vec<u32>,
    /// (position, target, kind) sorted by position.
    rows: Vec<(usize, usize, RowKind)>,
}

/// Partitions the shuffle set into cells; permutation never crosses cells.
///
/// `shuffle_set` must be sorted. Cells are returned in ascending order of
/// their first position, each sorted.
pub fn apply_granularity(
    spans: &[SelectionSpan],
    cfg: &MaskingConfig,
    seq: &TokenizedSequence,
    shuffle_set: &[usize],
) -> Vec<Vec<usize>> {
    let key = |p: usize| -> usize {
        match cfg.granularity {
            Granularity::None => 0,
            Granularity::Word => seq.word_ids[p].map_or(usize::MAX, |w| w as usize),
            Granularity::Ngram => spans
                .iter()
                .position(|s| s.token_positions.contains(&p))
                .unwrap_or(usize::MAX),
            Granularity::Sentence => seq.sentence_ids[p] as usize,
        }
    };
    let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &p in shuffle_set {
        cells.entry(key(p)).or_default().push(p);
    }
    let mut cells: Vec<Vec<usize>> = cells.into_values().collect();
    cells.sort_by_key(|c| c[0]);
    cells
}

fn plan_segment<R: Rng + ?Sized>(
    seq: &TokenizedSequence,
    spans: &[SelectionSpan],
    cfg: &MaskingConfig,
    rng: &mut R,
) -> SegmentPlan {
    let mut selected: Vec<usize> = spans.iter().flat_map(|s| s.token_positions.iter().copied()).collect();
    selected.sort_unstable();
    let shuffle_set: Vec<usize> = selected
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() < cfg.shuffle_ratio)
        .collect();
    let mut sigma: BTreeMap<usize, usize> = BTreeMap::new();
    for cell in apply_granularity(spans, cfg, seq, &shuffle_set) {
        if cell.len() < 2 {
            continue;
        }
        let mut image = cell.clone();
        image.shuffle(rng);
        sigma.extend(cell.into_iter().zip(image));
    }
    plan_from_sigma(seq, &selected, &sigma, cfg.target_semantics)
}

fn plan_from_sigma(
    seq: &TokenizedSequence,
    selected: &[usize],
    sigma: &BTreeMap<usize, usize>,
    semantics: TargetSemantics,
) -> SegmentPlan {
    let mut permuted = seq.token_ids.clone();
    let mut inverse = HashMap::with_capacity(sigma.len());
    for (&from, &to) in sigma {
        permuted[to] = seq.token_ids[from];
        inverse.insert(to, from);
    }
    let rows = selected
        .iter()
        .map(|&p| match sigma.get(&p) {
            Some(&to) => {
                let target = match semantics {
                    TargetSemantics::Sigma => to,
                    TargetSemantics::SigmaInverse => inverse[&p],
                };
                (p, target, RowKind::Shuffled)
            }
            None => (p, p, RowKind::Negative),
        })
        .collect();
    SegmentPlan { permuted, rows }
}

fn single_segment(seq: &TokenizedSequence, plan: SegmentPlan) -> PerLMInstance {
    let (pred_positions, position_targets, row_kinds) = unzip_rows(&plan.rows, 0);
    PerLMInstance {
        vocab_targets: pred_positions.iter().map(|&p| seq.token_ids[p]).collect(),
        input_ids: plan.permuted,
        segment_ids: vec![0; seq.len()],
        pad_mask: vec![false; seq.len()],
        pred_positions,
        position_targets,
        original_ids: seq.token_ids.clone(),
        row_kinds,
    }
}

fn unzip_rows(rows: &[(usize, usize, RowKind)], offset: usize) -> (Vec<usize>, Vec<usize>, Vec<RowKind>) {
    let mut p = Vec::with_capacity(rows.len());
    let mut t = Vec::with_capacity(rows.len());
    let mut k = Vec::with_capacity(rows.len());
    for &(pos, target, kind) in rows {
        p.push(pos + offset);
        t.push(target + offset);
        k.push(kind);
    }
    (p, t, k)
}

/// Shuffles the selected tokens of one sequence (no `[CLS]`/`[SEP]`);
/// positions and targets are sequence indices.
///
/// Each selected token independently enters the shuffle set with
/// probability `shuffle_ratio`; inside every granularity cell of two or more
/// positions a uniform permutation is drawn. Everything else selected is a
/// negative that targets itself.
pub fn permute_selected<R: Rng + ?Sized>(
    seq: &TokenizedSequence,
    spans: &[SelectionSpan],
    cfg: &MaskingConfig,
    rng: &mut R,
) -> PerLMInstance {
    single_segment(seq, plan_segment(seq, spans, cfg, rng))
}

/// Builds the single-segment instance for an explicit permutation.
/// `sigma` maps an original position to the position its token moves to;
/// its support must be a subset of `selected` and it must be a bijection.
pub fn apply_permutation(
    seq: &TokenizedSequence,
    selected: &[usize],
    sigma: &BTreeMap<usize, usize>,
    semantics: TargetSemantics,
) -> Result<PerLMInstance> {
    let mut selected = selected.to_vec();
    selected.sort_unstable();
    selected.dedup();
    let mut image: Vec<usize> = sigma.values().copied().collect();
    image.sort_unstable();
    let support: Vec<usize> = sigma.keys().copied().collect();
    if image != support {
        return Err(Error::Data("permutation is not a bijection on its support".into()));
    }
    if let Some(p) = support.iter().find(|p| selected.binary_search(p).is_err() || **p >= seq.len()) {
        return Err(Error::Data(format!("position {p} is permuted but not selected")));
    }
    // Identity pairs of a cycle-free sigma are plain negatives.
    let moved: BTreeMap<usize, usize> = sigma.iter().filter(|(a, b)| a != b).map(|(a, b)| (*a, *b)).collect();
    Ok(single_segment(seq, plan_from_sigma(seq, &selected, &moved, semantics)))
}

/// Replaces the prediction rows according to the scope: partial keeps the
/// selected rows, full adds a self-targeting row for every other non-pad
/// position.
pub fn expand_prediction_scope(mut inst: PerLMInstance, cfg: &MaskingConfig) -> PerLMInstance {
    let keep: Vec<usize> = inst.selected_rows().collect();
    let mut rows: Vec<(usize, usize, u32, RowKind)> = keep
        .iter()
        .map(|&r| (inst.pred_positions[r], inst.position_targets[r], inst.vocab_targets[r], inst.row_kinds[r]))
        .collect();
    if cfg.prediction_scope == PredictionScope::Full {
        let chosen: std::collections::HashSet<usize> = rows.iter().map(|r| r.0).collect();
        for p in 0..inst.len() {
            if !inst.pad_mask[p] && !chosen.contains(&p) {
                rows.push((p, p, inst.original_ids[p], RowKind::Context));
            }
        }
        rows.sort_by_key(|r| r.0);
    }
    inst.pred_positions = rows.iter().map(|r| r.0).collect();
    inst.position_targets = rows.iter().map(|r| r.1).collect();
    inst.vocab_targets = rows.iter().map(|r| r.2).collect();
    inst.row_kinds = rows.iter().map(|r| r.3).collect();
    inst
}

/// Removes the trailing word (or trailing special token) of `seq`.
fn pop_word(seq: &mut TokenizedSequence) {
    let Some(last) = seq.word_ids.last().copied() else { return };
    let mut n = seq.len() - 1;
    if last.is_some() {
        while n > 0 && seq.word_ids[n - 1] == last {
            n -= 1;
        }
    }
    *seq = seq.truncated(n);
}

/// Assembles `[CLS] A' [SEP] B' [SEP]` (or `[CLS] A' [SEP]` when `b` is
/// empty) padded to `max_len`, with A and B permuted independently.
///
/// Returns `Ok(None)` when both sides are empty after truncation.
pub fn build_pair_instance<R: Rng + ?Sized>(
    a: &TokenizedSequence,
    b: &TokenizedSequence,
    max_len: usize,
    vocab: &Vocab,
    cfg: &MaskingConfig,
    rng: &mut R,
) -> Result<Option<PerLMInstance>> {
    Ok(build_pair_instance_traced(a, b, max_len, vocab, cfg, rng)?.map(|(inst, _)| inst))
}

pub fn build_pair_instance_traced<R: Rng + ?Sized>(
    a: &TokenizedSequence,
    b: &TokenizedSequence,
    max_len: usize,
    vocab: &Vocab,
    cfg: &MaskingConfig,
    rng: &mut R,
) -> Result<Option<(PerLMInstance, GenerationTrace)>> {
    if max_len < 3 {
        return Err(Error::Config(format!("max_len {max_len} cannot hold [CLS] x [SEP]")));
    }
    let (mut a, mut b) = if a.is_empty() { (b.clone(), a.clone()) } else { (a.clone(), b.clone()) };
    loop {
        let overhead = if b.is_empty() { 2 } else { 3 };
        if a.len() + b.len() + overhead <= max_len {
            break;
        }
        if a.len() > b.len() {
            pop_word(&mut a);
        } else {
            pop_word(&mut b);
        }
    }
    if a.is_empty() {
        std::mem::swap(&mut a, &mut b);
    }
    if a.is_empty() {
        return Ok(None);
    }

    let n_real = a.len() + 2 + if b.is_empty() { 0 } else { b.len() + 1 };
    let k = if cfg.select_ratio > 0.0 { floor_ratio(cfg.select_ratio, n_real).max(1) } else { 0 };
    let k_a = ((k * a.len()) as f64 / (a.len() + b.len()) as f64).round() as usize;
    let k_b = k - k_a;

    let mut trace = GenerationTrace::default();
    let mut input_ids = vec![vocab.cls_id()];
    let mut original_ids = vec![vocab.cls_id()];
    let mut segment_ids = vec![0u8];
    let mut rows = Vec::new();
    for (seg, budget, segment) in [(&a, k_a, 0u8), (&b, k_b, 1u8)] {
        if seg.is_empty() {
            continue;
        }
        let spans = select_spans_budgeted(seg, cfg, Some(budget), rng);
        let plan = plan_segment(seg, &spans, cfg, rng);
        let offset = input_ids.len();
        trace.words += seg.word_count();
        trace.selected_words += spans.iter().map(SelectionSpan::word_len).sum::<usize>();
        trace.selected_tokens += plan.rows.len();
        trace.shuffled_tokens += plan.rows.iter().filter(|r| r.2 == RowKind::Shuffled).count();
        trace.gram_lengths.extend(spans.iter().map(|s| s.n));
        rows.extend(plan.rows.iter().map(|&(p, t, kind)| (p + offset, t + offset, kind)));
        input_ids.extend(&plan.permuted);
        original_ids.extend(&seg.token_ids);
        input_ids.push(vocab.sep_id());
        original_ids.push(vocab.sep_id());
        segment_ids.extend(std::iter::repeat_n(segment, seg.len() + 1));
    }
    debug_assert_eq!(input_ids.len(), n_real);
    let mut pad_mask = vec![false; n_real];
    input_ids.resize(max_len, vocab.pad_id());
    original_ids.resize(max_len, vocab.pad_id());
    segment_ids.resize(max_len, 0);
    pad_mask.resize(max_len, true);

    let (pred_positions, position_targets, row_kinds) = unzip_rows(&rows, 0);
    let inst = PerLMInstance {
        vocab_targets: pred_positions.iter().map(|&p| original_ids[p]).collect(),
        input_ids,
        segment_ids,
        pad_mask,
        pred_positions,
        position_targets,
        original_ids,
        row_kinds,
    };
    Ok(Some((expand_prediction_scope(inst, cfg), trace)))
}
