use std::path::Path;

use super::config::MaskingConfig;
use super::instance::PerLMInstance;
use super::permute::build_pair_instance_traced;
use super::stats::CorpusStats;
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::tokenizer::{tokenize_text, SentenceSplitter, TokenizedSequence, Vocab, WordSplitter};

/// One document: its non-empty lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    pub lines: Vec<String>,
}

/// Documents are separated by blank lines.
pub fn parse_corpus(text: &str) -> Vec<Document> {
    let mut docs = Vec::new();
    let mut current = Document::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            if !current.lines.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
        } else {
            current.lines.push(line.to_string());
        }
    }
    if !current.lines.is_empty() {
        docs.push(current);
    }
    docs
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_corpus(&text))
}

/// Tokenizes a document; every line ends a sentence.
pub fn tokenize_document(
    doc: &Document,
    vocab: &Vocab,
    word_splitter: &dyn WordSplitter,
    sentence_splitter: &dyn SentenceSplitter,
    lowercase: bool,
) -> TokenizedSequence {
    doc.lines.iter().fold(TokenizedSequence::default(), |acc, line| {
        let line = if lowercase { line.to_lowercase() } else { line.clone() };
        let seq = tokenize_text(&line, vocab, word_splitter, sentence_splitter);
        if acc.is_empty() {
            seq
        } else {
            acc.concat(&seq)
        }
    })
}

/// Groups whole sentences into chunks of at most `max_tokens` tokens. A
/// sentence longer than that forms a chunk alone and is left for
/// truncation.
pub fn sentence_chunks(seq: &TokenizedSequence, max_tokens: usize) -> Vec<TokenizedSequence> {
    let mut chunks = Vec::new();
    let mut start = None::<usize>;
    let mut end = 0;
    for s in seq.sentence_spans() {
        match start {
            Some(st) if s.end - st <= max_tokens => end = s.end,
            Some(st) => {
                chunks.push(seq.slice(st..end));
                start = Some(s.start);
                end = s.end;
            }
            None => {
                start = Some(s.start);
                end = s.end;
            }
        }
    }
    if let Some(st) = start {
        chunks.push(seq.slice(st..end));
    }
    chunks
}

/// Splits a chunk into segments A and B on a sentence boundary near the
/// token midpoint. A single-sentence chunk yields an empty B.
pub fn split_pair(seq: &TokenizedSequence) -> (TokenizedSequence, TokenizedSequence) {
    let sentences = seq.sentence_spans();
    if sentences.len() < 2 {
        return (seq.clone(), TokenizedSequence::default());
    }
    let half = seq.len().div_ceil(2);
    let cut = sentences
        .iter()
        .take(sentences.len() - 1)
        .map(|s| s.end)
        .find(|&e| e >= half)
        .unwrap_or(sentences[sentences.len() - 2].end);
    (seq.slice(0..cut), seq.slice(cut..seq.len()))
}

/// Turns tokenized documents into instances. Each document is cut into
/// sentence chunks that fit `max_len`, and every chunk yields one instance
/// per duplication round, seeded by `(seed, round, chunk ordinal)`.
pub fn generate_instances(
    documents: &[TokenizedSequence],
    vocab: &Vocab,
    cfg: &MaskingConfig,
    max_len: usize,
    dupe_factor: usize,
    seed: u64,
) -> Result<(Vec<PerLMInstance>, CorpusStats)> {
    cfg.validate()?;
    let chunks: Vec<(TokenizedSequence, TokenizedSequence)> = documents
        .iter()
        .flat_map(|d| sentence_chunks(d, max_len.saturating_sub(3)))
        .map(|c| split_pair(&c))
        .collect();
    let mut out = Vec::with_capacity(chunks.len() * dupe_factor);
    let mut stats = CorpusStats::new(cfg.ngram_weights.len());
    for round in 0..dupe_factor {
        for (ordinal, (a, b)) in chunks.iter().enumerate() {
            let mut rng = seed::rng(seed, &[stream::DATA, round as u64, ordinal as u64]);
            if let Some((inst, trace)) = build_pair_instance_traced(a, b, max_len, vocab, cfg, &mut rng)? {
                stats.add(&trace);
                out.push(inst);
            }
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{WhitespaceWordSplitter, TerminatorSentenceSplitter};

    fn vocab() -> Vocab {
        let mut t: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "##."].map(String::from).to_vec();
        t.extend((0..30).map(|i| format!("w{i}")));
        Vocab::from_tokens(t).unwrap()
    }

    #[test]
    fn corpus_blocks() {
        let docs = parse_corpus("a b\nc\n\n\nd e\n");
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].lines, vec!["a b", "c"]);
    }

    #[test]
    fn lines_end_sentences() {
        let v = vocab();
        let doc = Document {
            lines: vec!["w1 w2".into(), "w3 w4. w5".into()],
        };
        let s = tokenize_document(&doc, &v, &WhitespaceWordSplitter, &TerminatorSentenceSplitter, false);
        assert_eq!(s.sentence_ids, vec![0, 0, 1, 1, 1, 2]);
        assert_eq!(s.word_ids, vec![Some(0), Some(1), Some(2), Some(3), Some(3), Some(4)]);
        s.validate().unwrap();
        let (a, b) = split_pair(&s);
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 1);
        assert_eq!(sentence_chunks(&s, 3).len(), 3);
        assert_eq!(sentence_chunks(&s, 6).len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let v = vocab();
        let text = (0..6)
            .map(|d| (0..4).map(|s| (0..8).map(|w| format!("w{}", (d + s + w) % 30)).collect::<Vec<_>>().join(" ") + ".").collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("\n\n");
        let docs: Vec<_> = parse_corpus(&text)
            .iter()
            .map(|d| tokenize_document(d, &v, &WhitespaceWordSplitter, &TerminatorSentenceSplitter, false))
            .collect();
        let cfg = MaskingConfig::default();
        let (a, sa) = generate_instances(&docs, &v, &cfg, 24, 2, 5).unwrap();
        let (b, sb) = generate_instances(&docs, &v, &cfg, 24, 2, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(a.len() >= 12);
        for inst in &a {
            inst.validate(cfg.target_semantics, |id| v.is_special(id)).unwrap();
        }
        let (c, _) = generate_instances(&docs, &v, &cfg, 24, 2, 6).unwrap();
        assert_ne!(a, c);
    }
}
