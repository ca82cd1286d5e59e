use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ceil_ratio, MaskingConfig};
use crate::tokenizer::TokenizedSequence;

/// A run of whole words chosen for permutation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSpan {
    /// Half-open word-index range (indices into [`TokenizedSequence::word_spans`]).
    pub word_start: usize,
    pub word_end: usize,
    pub token_positions: Vec<usize>,
    /// Gram length drawn from the configured weights. The span covers fewer
    /// words when it was cut at the sequence end, an earlier span, or the
    /// remaining budget.
    pub n: usize,
}

impl SelectionSpan {
    pub fn word_len(&self) -> usize {
        self.word_end - self.word_start
    }
}

/// Selects whole-word n-gram spans covering about `select_ratio` of the
/// words. See [`select_spans_budgeted`].
pub fn select_spans<R: Rng + ?Sized>(seq: &TokenizedSequence, cfg: &MaskingConfig, rng: &mut R) -> Vec<SelectionSpan> {
    select_spans_budgeted(seq, cfg, None, rng)
}

/// Span sampling: visit word start indices in random order; at each
/// uncovered start draw `n` from `ngram_weights` and take up to `n` words,
/// stopping early at the sequence end, at an already covered word, or when
/// the word budget `ceil(select_ratio * words)` or the optional token budget
/// would be exceeded. Sampling ends when either budget is spent.
///
/// Spans are returned ordered by `word_start`.
pub fn select_spans_budgeted<R: Rng + ?Sized>(
    seq: &TokenizedSequence,
    cfg: &MaskingConfig,
    token_budget: Option<usize>,
    rng: &mut R,
) -> Vec<SelectionSpan> {
    let words = seq.word_spans();
    let mut word_budget = ceil_ratio(cfg.select_ratio, words.len());
    let mut token_budget = token_budget.unwrap_or(usize::MAX);
    if word_budget == 0 || token_budget == 0 {
        return Vec::new();
    }
    let mut starts: Vec<usize> = (0..words.len()).collect();
    starts.shuffle(rng);
    let mut covered = vec![false; words.len()];
    let mut spans = Vec::new();
    for start in starts {
        if word_budget == 0 || token_budget == 0 {
            break;
        }
        if covered[start] {
            continue;
        }
        let n = sample_gram(&cfg.ngram_weights, rng);
        let mut end = start;
        let mut tokens = 0;
        while end < words.len() && end - start < n.min(word_budget) && !covered[end] {
            let t = words[end].len();
            if tokens + t > token_budget {
                break;
            }
            tokens += t;
            end += 1;
        }
        if end == start {
            continue;
        }
        covered[start..end].iter_mut().for_each(|c| *c = true);
        word_budget -= end - start;
        token_budget -= tokens;
        spans.push(SelectionSpan {
            word_start: start,
            word_end: end,
            token_positions: words[start..end].iter().flat_map(|r| r.clone()).collect(),
            n,
        });
    }
    spans.sort_by_key(|s| s.word_start);
    spans
}

/// Draws a gram length in `1..=weights.len()`.
fn sample_gram<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i + 1;
        }
    }
    // u landed in rounding slack above the cumulative sum
    weights.iter().rposition(|&w| w > 0.0).map_or(1, |i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn single_token_words(n: usize) -> TokenizedSequence {
        TokenizedSequence {
            token_ids: (0..n as u32).map(|i| 10 + i % 50).collect(),
            word_ids: (0..n as u32).map(Some).collect(),
            sentence_ids: vec![0; n],
            is_special: vec![false; n],
        }
    }

    #[test]
    fn hundred_words_select_fifteen() {
        let seq = single_token_words(100);
        let cfg = MaskingConfig::default();
        let mut total = 0;
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spans = select_spans(&seq, &cfg, &mut rng);
            let words: usize = spans.iter().map(SelectionSpan::word_len).sum();
            assert!((14..=16).contains(&words), "seed {seed}: {words}");
            total += words;
        }
        let mean = total as f64 / 10_000.0;
        assert!((mean - 15.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn zero_ratio_selects_nothing() {
        let cfg = MaskingConfig {
            select_ratio: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(select_spans(&single_token_words(30), &cfg, &mut rng).is_empty());
    }

    #[test]
    fn at_least_one_word_when_words_exist() {
        let cfg = MaskingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spans = select_spans(&single_token_words(2), &cfg, &mut rng);
        assert_eq!(spans.iter().map(SelectionSpan::word_len).sum::<usize>(), 1);
    }

    #[test]
    fn gram_lengths_follow_weights() {
        let seq = single_token_words(200);
        let cfg = MaskingConfig::default();
        let mut hist = [0usize; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut total = 0;
        while total < 100_000 {
            for s in select_spans(&seq, &cfg, &mut rng) {
                hist[s.n - 1] += 1;
                total += 1;
            }
        }
        for (h, w) in hist.iter().zip(&cfg.ngram_weights) {
            let f = *h as f64 / total as f64;
            assert!((f - w).abs() < 0.01, "{f} vs {w}");
        }
    }

    #[test]
    fn spans_cover_whole_words_without_overlap() {
        // words of 1..=3 tokens
        let mut seq = TokenizedSequence::default();
        for w in 0..40u32 {
            for _ in 0..(1 + w % 3) {
                seq.token_ids.push(7);
                seq.word_ids.push(Some(w));
                seq.sentence_ids.push(0);
                seq.is_special.push(false);
            }
        }
        let words = seq.word_spans();
        let cfg = MaskingConfig {
            select_ratio: 0.5,
            ..Default::default()
        };
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spans = select_spans_budgeted(&seq, &cfg, Some(25), &mut rng);
            let mut seen = std::collections::HashSet::new();
            let mut tokens = 0;
            for s in &spans {
                let expect: Vec<usize> = words[s.word_start..s.word_end].iter().flat_map(|r| r.clone()).collect();
                assert_eq!(s.token_positions, expect);
                assert!(s.word_len() <= s.n);
                for p in &s.token_positions {
                    assert!(seen.insert(*p));
                }
                tokens += s.token_positions.len();
            }
            assert!(tokens <= 25);
        }
    }
}
