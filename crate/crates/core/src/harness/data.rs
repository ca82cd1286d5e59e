use rand::seq::SliceRandom;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::perlm::{generate_instances, read_corpus, tokenize_document, CorpusStats, Document, PerLMInstance};
use crate::seed::{self, stream};
use crate::tokenizer::{TerminatorSentenceSplitter, TokenizedSequence, Vocab};

/// A tokenized corpus split into training and held-out documents.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub vocab: Vocab,
    pub train_docs: Vec<TokenizedSequence>,
    pub eval_docs: Vec<TokenizedSequence>,
}

/// Instances ready for training and evaluation.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<PerLMInstance>,
    pub eval: Vec<PerLMInstance>,
    pub train_stats: CorpusStats,
}

/// Tokenizes `docs` and holds out `run.data.eval_fraction` of them, chosen
/// by the `(seed, SPLIT)` stream. At least one document lands on each side
/// whenever the fraction is positive.
pub fn prepare_corpus(docs: &[Document], vocab: Vocab, run: &RunConfig) -> Result<PreparedCorpus> {
    let splitter = run.data.word_splitter.splitter();
    let mut seqs: Vec<TokenizedSequence> = docs
        .iter()
        .map(|d| tokenize_document(d, &vocab, splitter.as_ref(), &TerminatorSentenceSplitter, run.data.lowercase))
        .filter(|s| !s.is_empty())
        .collect();
    if seqs.is_empty() {
        return Err(Error::Config("corpus contains no text".into()));
    }
    let mut n_eval = (run.data.eval_fraction * seqs.len() as f64).round() as usize;
    if run.data.eval_fraction > 0.0 {
        if seqs.len() < 2 {
            return Err(Error::Config("a held-out split needs at least two documents".into()));
        }
        n_eval = n_eval.clamp(1, seqs.len() - 1);
    }
    seqs.shuffle(&mut seed::rng(run.seed, &[stream::SPLIT]));
    let train_docs = seqs.split_off(n_eval);
    Ok(PreparedCorpus {
        vocab,
        train_docs,
        eval_docs: seqs,
    })
}

/// Reads `data.corpus` and `data.vocab`.
pub fn load_corpus(run: &RunConfig) -> Result<PreparedCorpus> {
    let corpus = run.data.corpus.as_ref().ok_or_else(|| Error::Config("data.corpus is not set".into()))?;
    let vocab = run.data.vocab.as_ref().ok_or_else(|| Error::Config("data.vocab is not set".into()))?;
    prepare_corpus(&read_corpus(corpus)?, Vocab::load(vocab)?, run)
}

/// Generates training instances with the run seed and held-out instances
/// with the `(seed, EVAL)` seed, both under `run.masking` and with the
/// same duplication factor.
pub fn build_dataset(corpus: &PreparedCorpus, run: &RunConfig) -> Result<Dataset> {
    let d = &run.data;
    let (train, train_stats) =
        generate_instances(&corpus.train_docs, &corpus.vocab, &run.masking, d.max_len, d.dupe_factor, run.seed)?;
    let eval_seed = seed::derive(run.seed, &[stream::EVAL]);
    let (eval, _) = generate_instances(&corpus.eval_docs, &corpus.vocab, &run.masking, d.max_len, d.dupe_factor, eval_seed)?;
    Ok(Dataset {
        train,
        eval,
        train_stats,
    })
}
