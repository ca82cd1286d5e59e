use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BIEO tag. `B` starts the words the moved word must precede, `I`
/// continues them, `E` marks the moved word, `O` is in place.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    E,
    O,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::B, Tag::I, Tag::E, Tag::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }
}

/// Tokens of a corrupted sentence with one tag each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BieoLabeling {
    pub tokens: Vec<String>,
    pub labels: Vec<Tag>,
}

/// One error span in token indices: `start..end` is `B I* E+`, and
/// `moved` is its `E` tail.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WorSpan {
    pub start: usize,
    pub end: usize,
    pub moved: Range<usize>,
}

impl BieoLabeling {
    pub fn new(tokens: Vec<String>, labels: Vec<Tag>) -> Result<Self> {
        if tokens.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} tokens but {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        Ok(Self { tokens, labels })
    }

    pub fn spans(&self) -> Vec<WorSpan> {
        extract_spans(&self.labels)
    }

    /// Whether every maximal non-`O` run is exactly one `B I* E+` span.
    pub fn is_well_formed(&self) -> bool {
        let spans = self.spans();
        let covered: usize = spans.iter().map(|s| s.end - s.start).sum();
        let non_o = self.labels.iter().filter(|&&t| t != Tag::O).count();
        covered == non_o && spans.windows(2).all(|w| w[0].end < w[1].start)
    }
}

/// Parses spans left to right: a `B`, any `I`s, then one or more `E`s.
/// Tags that do not fit the pattern belong to no span.
pub fn extract_spans(labels: &[Tag]) -> Vec<WorSpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        if labels[i] != Tag::B {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = i + 1;
        while j < labels.len() && labels[j] == Tag::I {
            j += 1;
        }
        let e_start = j;
        while j < labels.len() && labels[j] == Tag::E {
            j += 1;
        }
        if j > e_start {
            spans.push(WorSpan {
                start,
                end: j,
                moved: e_start..j,
            });
            i = j;
        } else {
            i = e_start.max(start + 1);
        }
    }
    spans
}

/// Replaces every tag outside a parsed span with `O`.
pub fn repair_labels(labels: &[Tag]) -> Vec<Tag> {
    let mut out = vec![Tag::O; labels.len()];
    for s in extract_spans(labels) {
        out[s.start..s.end].copy_from_slice(&labels[s.start..s.end]);
    }
    out
}

/// Puts each span's `E` tokens back in front of its `B I*` tokens. Tags
/// that form no span are read as `O`, so any tag sequence decodes to a
/// permutation of the tokens.
pub fn decode_labels(labeling: &BieoLabeling) -> Vec<String> {
    let mut out = labeling.tokens.clone();
    for s in labeling.spans() {
        let moved = &labeling.tokens[s.moved.clone()];
        let context = &labeling.tokens[s.start..s.moved.start];
        out[s.start..s.start + moved.len()].clone_from_slice(moved);
        out[s.start + moved.len()..s.end].clone_from_slice(context);
    }
    out
}

/// Span-level precision, recall and F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_spans: usize,
    pub predicted_spans: usize,
    pub correct_spans: usize,
}

impl Prf {
    pub fn from_counts(gold: usize, predicted: usize, correct: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            gold_spans: gold,
            predicted_spans: predicted,
            correct_spans: correct,
        }
    }
}

/// A predicted span is correct when its start, end and moved range all
/// match a gold span. Empty denominators give 0.
pub fn span_prf(gold: &[Vec<Tag>], predicted: &[Vec<Tag>]) -> Result<Prf> {
    if gold.len() != predicted.len() {
        return Err(Error::Data(format!(
            "{} gold sequences but {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let (mut g, mut p, mut c) = (0, 0, 0);
    for (i, (gs, ps)) in gold.iter().zip(predicted).enumerate() {
        if gs.len() != ps.len() {
            return Err(Error::Data(format!(
                "sequence {i}: {} gold tags but {} predicted",
                gs.len(),
                ps.len()
            )));
        }
        let gold_spans = extract_spans(gs);
        let pred_spans = extract_spans(ps);
        c += pred_spans.iter().filter(|s| gold_spans.contains(s)).count();
        g += gold_spans.len();
        p += pred_spans.len();
    }
    Ok(Prf::from_counts(g, p, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Tag::*;

    fn labeling(tokens: &str, labels: &[Tag]) -> BieoLabeling {
        BieoLabeling::new(tokens.chars().map(String::from).collect(), labels.to_vec()).unwrap()
    }

    #[test]
    fn decodes_the_breakfast_sentence() {
        let l = labeling("我每天一个吃苹果", &[O, O, O, B, I, E, O, O]);
        assert_eq!(decode_labels(&l).concat(), "我每天吃一个苹果");
        assert!(l.is_well_formed());
        assert_eq!(l.spans(), vec![WorSpan { start: 3, end: 6, moved: 5..6 }]);
    }

    #[test]
    fn repair_contract() {
        let l = labeling("abcde", &[O, I, O, O, O]);
        assert_eq!(decode_labels(&l), l.tokens);
        assert_eq!(repair_labels(&[I, E, B, I, O, B, E, E, B]), vec![O, O, O, O, O, B, E, E, O]);
        let all_o = labeling("abc", &[O, O, O]);
        assert_eq!(decode_labels(&all_o), all_o.tokens);
    }

    #[test]
    fn multi_token_moved_word() {
        let l = labeling("xabcyz", &[O, B, I, E, E, O]);
        assert_eq!(decode_labels(&l).concat(), "xcyabz");
    }

    #[test]
    fn adjacent_runs_are_not_well_formed() {
        let l = labeling("abcd", &[B, E, B, E]);
        assert_eq!(l.spans().len(), 2);
        assert!(!l.is_well_formed());
    }

    #[test]
    fn prf_conventions() {
        let gold = vec![vec![O, B, E, O, B, I, E]];
        assert_eq!(span_prf(&gold, &gold).unwrap().f1, 1.0);
        let none = vec![vec![O; 7]];
        let r = span_prf(&gold, &none).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        // One exact match and one span with the wrong extent.
        let pred = vec![vec![O, B, E, O, O, B, E]];
        let r = span_prf(&gold, &pred).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert!(span_prf(&gold, &[vec![O; 6]]).is_err());
    }
}
