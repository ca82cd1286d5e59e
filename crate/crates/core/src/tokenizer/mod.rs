//! WordPiece tokenization with word and sentence boundary metadata.
//!
//! Word boundaries only drive span selection; the model sees the WordPiece
//! ids. A word splitter decides what counts as a word (whitespace, CJK
//! characters, or an external segmentation), and a sentence splitter
//! assigns sentence ids used by sentence-granularity permutation.

mod split;
mod vocab;
mod wordpiece;

pub use split::{
    is_cjk, CjkWordSplitter, SentenceSplitter, TerminatorSentenceSplitter, WhitespaceWordSplitter,
    WholeTextSentenceSplitter, WordSplitter, WordSplitterKind,
};
pub use vocab::{Vocab, CLS, MASK, PAD, SEP, UNK};
pub use wordpiece::{tokenize_text, tokenize_word, TokenizedSequence, MAX_WORD_CHARS};
