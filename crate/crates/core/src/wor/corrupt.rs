use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labels::{BieoLabeling, Tag};
use crate::error::{Error, Result};

/// Moves the word at `from` to the right past the next `context` words.
/// In the corrupted sentence the span covers word indices
/// `from..=from + context`, with the moved word last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordMove {
    pub from: usize,
    pub context: usize,
}

impl WordMove {
    pub fn words(&self) -> std::ops::Range<usize> {
        self.from..self.from + self.context + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    /// Spans per sentence are drawn uniformly from `1..=max_spans`.
    pub max_spans: usize,
    /// Most words a moved word may skip over.
    pub max_context: usize,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            max_spans: 2,
            max_context: 3,
        }
    }
}

/// Applies moves whose spans are disjoint.
pub fn apply_moves(words: &[String], moves: &[WordMove]) -> Result<Vec<String>> {
    let mut out = words.to_vec();
    let mut used = vec![false; words.len()];
    for m in moves {
        let r = m.words();
        if m.context == 0 || r.end > words.len() || used[r.clone()].iter().any(|&u| u) {
            return Err(Error::Data(format!("move {m:?} is outside the sentence or overlaps another")));
        }
        used[r.clone()].iter_mut().for_each(|u| *u = true);
        out[r].rotate_left(1);
    }
    Ok(out)
}

/// Token-level labels for `corrupted`, which must equal `correct` with
/// `moves` applied. Each word expands into `pieces(word)`; the first
/// context token is `B`, the remaining context tokens `I`, and every token
/// of the moved word `E`.
pub fn encode_labels(
    correct: &[String],
    corrupted: &[String],
    moves: &[WordMove],
    pieces: impl Fn(&str) -> Vec<String>,
) -> Result<BieoLabeling> {
    if apply_moves(correct, moves)? != corrupted {
        return Err(Error::Data("corrupted sentence does not follow from the given moves".into()));
    }
    let mut word_tags = vec![None; corrupted.len()];
    for m in moves {
        for w in m.from..m.from + m.context {
            word_tags[w] = Some(Tag::I);
        }
        word_tags[m.from] = Some(Tag::B);
        word_tags[m.from + m.context] = Some(Tag::E);
    }
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    for (word, tag) in corrupted.iter().zip(word_tags) {
        let ps = pieces(word);
        for (k, p) in ps.into_iter().enumerate() {
            labels.push(match tag {
                Some(Tag::B) if k > 0 => Tag::I,
                Some(t) => t,
                None => Tag::O,
            });
            tokens.push(p);
        }
    }
    BieoLabeling::new(tokens, labels)
}

/// Draws up to `cfg.max_spans` moves with at least one untouched word
/// between spans. Moves that would leave the sentence unchanged are never
/// drawn. Returns `None` for sentences under three words; when no span
/// fits the sentence comes back unchanged with no moves.
pub fn sample_moves<R: Rng + ?Sized>(words: &[String], cfg: &CorruptionConfig, rng: &mut R) -> Option<Vec<WordMove>> {
    if words.len() < 3 {
        return None;
    }
    let wanted = rng.gen_range(1..=cfg.max_spans.max(1));
    let mut blocked = vec![false; words.len()];
    let mut moves = Vec::new();
    for _ in 0..wanted {
        let mut candidates = Vec::new();
        for from in 0..words.len() {
            for context in 1..=cfg.max_context {
                let end = from + context + 1;
                if end > words.len() {
                    break;
                }
                let lo = from.saturating_sub(1);
                let hi = (end + 1).min(words.len());
                let clear = !blocked[lo..hi].iter().any(|&b| b);
                let changes = words[from + 1..end].iter().any(|w| *w != words[from]);
                if clear && changes {
                    candidates.push(WordMove { from, context });
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let m = candidates[rng.gen_range(0..candidates.len())];
        blocked[m.words()].iter_mut().for_each(|b| *b = true);
        moves.push(m);
    }
    moves.sort_by_key(|m| m.from);
    Some(moves)
}

/// Corrupts a sentence and labels it one tag per word.
pub fn corrupt_sentence<R: Rng + ?Sized>(
    words: &[String],
    cfg: &CorruptionConfig,
    rng: &mut R,
) -> Option<(Vec<String>, Vec<WordMove>, BieoLabeling)> {
    let moves = sample_moves(words, cfg, rng)?;
    let corrupted = apply_moves(words, &moves).expect("sampled moves are disjoint");
    let labeling = encode_labels(words, &corrupted, &moves, |w| vec![w.to_string()]).expect("labels follow the moves");
    Some((corrupted, moves, labeling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wor::decode_labels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use Tag::*;

    fn w(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    fn chars(word: &str) -> Vec<String> {
        word.chars().map(String::from).collect()
    }

    #[test]
    fn breakfast_sentence() {
        let correct = w("我 每天 吃 一个 苹果");
        let m = [WordMove { from: 2, context: 1 }];
        let corrupted = apply_moves(&correct, &m).unwrap();
        assert_eq!(corrupted.concat(), "我每天一个吃苹果");
        let l = encode_labels(&correct, &corrupted, &m, chars).unwrap();
        assert_eq!(l.labels, vec![O, O, O, B, I, E, O, O]);
        assert_eq!(decode_labels(&l).concat(), "我每天吃一个苹果");
    }

    #[test]
    fn identical_sentences_are_all_o() {
        let s = w("a b c");
        let l = encode_labels(&s, &s, &[], |x| vec![x.to_string()]).unwrap();
        assert_eq!(l.labels, vec![O; 3]);
    }

    #[test]
    fn mismatched_corruption_is_an_error() {
        let s = w("a b c d");
        let bad = w("b a d c");
        assert!(encode_labels(&s, &bad, &[WordMove { from: 0, context: 1 }], |x| vec![x.to_string()]).is_err());
    }

    #[test]
    fn two_spans_round_trip() {
        let s = w("p q r s t u v");
        let m = [WordMove { from: 0, context: 1 }, WordMove { from: 3, context: 2 }];
        let c = apply_moves(&s, &m).unwrap();
        assert_eq!(c, w("q p r t u s v"));
        let l = encode_labels(&s, &c, &m, |x| vec![x.to_string()]).unwrap();
        assert_eq!(l.labels, vec![B, E, O, B, I, E, O]);
        assert!(l.is_well_formed());
        assert_eq!(decode_labels(&l), s);
    }

    #[test]
    fn short_and_uniform_sentences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(corrupt_sentence(&w("a b"), &CorruptionConfig::default(), &mut rng).is_none());
        let (c, m, l) = corrupt_sentence(&w("x x x x"), &CorruptionConfig::default(), &mut rng).unwrap();
        assert_eq!(c, w("x x x x"));
        assert!(m.is_empty());
        assert_eq!(l.labels, vec![O; 4]);
    }

    #[test]
    fn random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = CorruptionConfig { max_spans: 3, max_context: 3 };
        for n in 3..30 {
            let s: Vec<String> = (0..n).map(|i| format!("w{}", i % 5)).collect();
            let (c, _, l) = corrupt_sentence(&s, &cfg, &mut rng).unwrap();
            assert!(l.is_well_formed());
            assert_eq!(l.tokens, c);
            assert_eq!(decode_labels(&l), s);
        }
    }
}
