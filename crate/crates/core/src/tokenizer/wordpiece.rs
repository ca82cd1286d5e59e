use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::split::{SentenceSplitter, WordSplitter};
use super::vocab::{Vocab, UNK};

/// Words longer than this many characters map to `[UNK]`.
pub const MAX_WORD_CHARS: usize = 100;

const CONTINUATION: &str = "##";

/// Greedy longest-match-first WordPiece. Continuation pieces carry a `##`
/// prefix. Any uncovered remainder turns the whole word into `[UNK]`.
pub fn tokenize_word(word: &str, vocab: &Vocab) -> Vec<String> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return vec![UNK.to_string()];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + 2);
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while end > start {
            let lo = chars[start].0;
            let hi = chars.get(end).map_or(word.len(), |c| c.0);
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.push_str(&word[lo..hi]);
            if vocab.id(&candidate).is_some() {
                found = Some(candidate.clone());
                break;
            }
            end -= 1;
        }
        match found {
            Some(piece) => pieces.push(piece),
            None => return vec![UNK.to_string()],
        }
        start = end;
    }
    pieces
}

/// Token ids with the boundary metadata used by span selection.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSequence {
    pub token_ids: Vec<u32>,
    /// Source word of each token; `None` for special tokens. Non-decreasing,
    /// and the pieces of one word are contiguous.
    pub word_ids: Vec<Option<u32>>,
    pub sentence_ids: Vec<u32>,
    pub is_special: Vec<bool>,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Token range of every word, ordered by word id.
    pub fn word_spans(&self) -> Vec<Range<usize>> {
        let mut spans: Vec<Range<usize>> = Vec::new();
        let mut last = None;
        for (pos, w) in self.word_ids.iter().enumerate() {
            let Some(w) = *w else { continue };
            if last == Some(w) {
                spans.last_mut().unwrap().end = pos + 1;
            } else {
                spans.push(pos..pos + 1);
                last = Some(w);
            }
        }
        spans
    }

    pub fn word_count(&self) -> usize {
        self.word_spans().len()
    }

    /// Concatenation of two sequences; word and sentence ids of `other` are
    /// shifted past those of `self`.
    pub fn concat(&self, other: &TokenizedSequence) -> TokenizedSequence {
        let word_shift = self.word_ids.iter().flatten().max().map_or(0, |w| w + 1);
        let sent_shift = self.sentence_ids.iter().max().map_or(0, |s| s + 1);
        let mut out = self.clone();
        out.token_ids.extend(&other.token_ids);
        out.word_ids.extend(other.word_ids.iter().map(|w| w.map(|w| w + word_shift)));
        out.sentence_ids.extend(other.sentence_ids.iter().map(|s| s + sent_shift));
        out.is_special.extend(&other.is_special);
        out
    }

    /// First `n` tokens. `n` should fall on a word boundary.
    pub fn truncated(&self, n: usize) -> TokenizedSequence {
        let n = n.min(self.len());
        TokenizedSequence {
            token_ids: self.token_ids[..n].to_vec(),
            word_ids: self.word_ids[..n].to_vec(),
            sentence_ids: self.sentence_ids[..n].to_vec(),
            is_special: self.is_special[..n].to_vec(),
        }
    }

    pub fn slice(&self, range: Range<usize>) -> TokenizedSequence {
        TokenizedSequence {
            token_ids: self.token_ids[range.clone()].to_vec(),
            word_ids: self.word_ids[range.clone()].to_vec(),
            sentence_ids: self.sentence_ids[range.clone()].to_vec(),
            is_special: self.is_special[range].to_vec(),
        }
    }

    /// Token range of every sentence, in order.
    pub fn sentence_spans(&self) -> Vec<Range<usize>> {
        let mut spans: Vec<Range<usize>> = Vec::new();
        for (pos, s) in self.sentence_ids.iter().enumerate() {
            match spans.last_mut() {
                Some(r) if self.sentence_ids[r.start] == *s => r.end = pos + 1,
                _ => spans.push(pos..pos + 1),
            }
        }
        spans
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.token_ids.len();
        if self.word_ids.len() != n || self.sentence_ids.len() != n || self.is_special.len() != n {
            return Err("metadata length differs from token count".into());
        }
        let mut last: Option<u32> = None;
        for (pos, (w, special)) in self.word_ids.iter().zip(&self.is_special).enumerate() {
            match (w, special) {
                (Some(_), true) => return Err(format!("special token at {pos} carries a word id")),
                (None, false) => return Err(format!("ordinary token at {pos} lacks a word id")),
                (Some(w), false) => {
                    if last.is_some_and(|l| *w < l) {
                        return Err(format!("word id decreases at {pos}"));
                    }
                    last = Some(*w);
                }
                (None, true) => {}
            }
        }
        for (i, r) in self.word_spans().iter().enumerate() {
            if self.word_spans()[i + 1..].iter().any(|o| self.word_ids[o.start] == self.word_ids[r.start]) {
                return Err(format!("word at {} is not contiguous", r.start));
            }
        }
        Ok(())
    }
}

/// Splits `text` into sentences and words, then WordPiece-tokenizes each
/// word. Words spelled exactly like a structural special token become that
/// special token with no word id.
pub fn tokenize_text(
    text: &str,
    vocab: &Vocab,
    word_splitter: &dyn WordSplitter,
    sentence_splitter: &dyn SentenceSplitter,
) -> TokenizedSequence {
    let mut seq = TokenizedSequence::default();
    let mut word_id = 0u32;
    for (sent_id, sentence) in sentence_splitter.split_sentences(text).into_iter().enumerate() {
        for word in word_splitter.split_words(sentence) {
            if let Some(id) = vocab.id(word).filter(|&id| vocab.is_special(id)) {
                seq.token_ids.push(id);
                seq.word_ids.push(None);
                seq.sentence_ids.push(sent_id as u32);
                seq.is_special.push(true);
                continue;
            }
            for piece in tokenize_word(word, vocab) {
                seq.token_ids.push(vocab.id(&piece).unwrap_or(vocab.unk_id()));
                seq.word_ids.push(Some(word_id));
                seq.sentence_ids.push(sent_id as u32);
                seq.is_special.push(false);
            }
            word_id += 1;
        }
    }
    seq
}
