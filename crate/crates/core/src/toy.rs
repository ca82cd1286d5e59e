//! A synthetic language for desk-scale runs.
//!
//! A sentence of `n` words has, at index `p`, one of the two words `a{p}`
//! and `b{p}`. Every word therefore names its own index, so a permuted
//! sentence can always be put back in order, yet each sentence carries one
//! free bit per word and held-out sentences are unseen strings.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::tokenizer::{Vocab, CLS, MASK, PAD, SEP, UNK};

/// Shape of a toy corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySpec {
    /// Largest sentence length; also the number of word pairs.
    pub max_words: usize,
    pub min_words: usize,
    pub documents: usize,
    /// Each sentence is one line; documents are blank-line separated.
    pub sentences_per_document: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            max_words: 24,
            min_words: 10,
            documents: 200,
            sentences_per_document: 1,
        }
    }
}

/// Specials followed by `a0 b0 a1 b1 ...`.
pub fn toy_vocab(max_words: usize) -> Vocab {
    let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].map(String::from).to_vec();
    for p in 0..max_words {
        tokens.push(format!("a{p}"));
        tokens.push(format!("b{p}"));
    }
    Vocab::from_tokens(tokens).expect("toy tokens are distinct")
}

/// One sentence of `n` words.
pub fn toy_sentence<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    (0..n)
        .map(|p| format!("{}{p}", if rng.gen_bool(0.5) { 'a' } else { 'b' }))
        .collect()
}

/// The corpus text, seeded by `(seed, TOY)`.
pub fn toy_corpus(spec: &ToySpec, seed: u64) -> Result<String> {
    if spec.min_words == 0 || spec.min_words > spec.max_words {
        return Err(Error::Config(format!(
            "toy sentence lengths {}..={} are empty",
            spec.min_words, spec.max_words
        )));
    }
    let mut rng = seed::rng(seed, &[stream::TOY]);
    let mut docs = Vec::with_capacity(spec.documents);
    for _ in 0..spec.documents {
        let lines: Vec<String> = (0..spec.sentences_per_document)
            .map(|_| {
                let n = rng.gen_range(spec.min_words..=spec.max_words);
                toy_sentence(n, &mut rng).join(" ")
            })
            .collect();
        docs.push(lines.join("\n"));
    }
    Ok(docs.join("\n\n") + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perlm::parse_corpus;

    #[test]
    fn vocab_fits_sixty_four() {
        let v = toy_vocab(24);
        assert_eq!(v.len(), 53);
        assert_eq!(v.id("a0"), Some(5));
        assert_eq!(v.id("b23"), Some(52));
    }

    #[test]
    fn corpus_shape() {
        let spec = ToySpec {
            documents: 20,
            sentences_per_document: 2,
            ..Default::default()
        };
        let text = toy_corpus(&spec, 1).unwrap();
        let docs = parse_corpus(&text);
        assert_eq!(docs.len(), 20);
        for d in &docs {
            assert_eq!(d.lines.len(), 2);
            for line in &d.lines {
                let words: Vec<&str> = line.split(' ').collect();
                assert!((10..=24).contains(&words.len()));
                for (p, w) in words.iter().enumerate() {
                    assert_eq!(&w[1..], p.to_string());
                }
            }
        }
        assert_eq!(text, toy_corpus(&spec, 1).unwrap());
        assert_ne!(text, toy_corpus(&spec, 2).unwrap());
    }
}
