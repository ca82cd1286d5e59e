use serde::{Deserialize, Serialize};

/// Splits one sentence into words.
pub trait WordSplitter {
    fn split_words<'a>(&self, sentence: &'a str) -> Vec<&'a str>;
}

/// Splits a document into sentences.
pub trait SentenceSplitter {
    fn split_sentences<'a>(&self, text: &'a str) -> Vec<&'a str>;
}

/// Words are maximal runs of non-whitespace. Use for pre-segmented corpora.
#[derive(Clone, Copy, Debug, Default)]
pub struct WhitespaceWordSplitter;

impl WordSplitter for WhitespaceWordSplitter {
    fn split_words<'a>(&self, sentence: &'a str) -> Vec<&'a str> {
        sentence.split_whitespace().collect()
    }
}

/// Whitespace splitting, with every CJK ideograph forming a word of its own.
#[derive(Clone, Copy, Debug, Default)]
pub struct CjkWordSplitter;

impl WordSplitter for CjkWordSplitter {
    fn split_words<'a>(&self, sentence: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        for chunk in sentence.split_whitespace() {
            let mut start = 0;
            for (i, c) in chunk.char_indices() {
                if is_cjk(c) {
                    if start < i {
                        out.push(&chunk[start..i]);
                    }
                    let end = i + c.len_utf8();
                    out.push(&chunk[i..end]);
                    start = end;
                }
            }
            if start < chunk.len() {
                out.push(&chunk[start..]);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordSplitterKind {
    /// [`CjkWordSplitter`]
    #[default]
    Cjk,
    /// [`WhitespaceWordSplitter`]
    Whitespace,
}

impl WordSplitterKind {
    pub fn splitter(self) -> Box<dyn WordSplitter + Send + Sync> {
        match self {
            WordSplitterKind::Cjk => Box::new(CjkWordSplitter),
            WordSplitterKind::Whitespace => Box::new(WhitespaceWordSplitter),
        }
    }
}

/// Ends a sentence after `。！？` unconditionally and after `.!?` when the
/// next character is whitespace or the text ends.
#[derive(Clone, Copy, Debug, Default)]
pub struct TerminatorSentenceSplitter;

impl SentenceSplitter for TerminatorSentenceSplitter {
    fn split_sentences<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut chars = text.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            let end = i + c.len_utf8();
            let boundary = match c {
                '。' | '！' | '？' => true,
                '.' | '!' | '?' => chars.peek().is_none_or(|&(_, n)| n.is_whitespace()),
                _ => false,
            };
            if boundary {
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
        }
        push_trimmed(&mut out, &text[start..]);
        out
    }
}

/// The whole text is one sentence.
#[derive(Clone, Copy, Debug, Default)]
pub struct WholeTextSentenceSplitter;

impl SentenceSplitter for WholeTextSentenceSplitter {
    fn split_sentences<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        push_trimmed(&mut out, text);
        out
    }
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F
        | 0x2B820..=0x2CEAF
        | 0xF900..=0xFAFF
        | 0x2F800..=0x2FA1F)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cjk_characters_are_words() {
        assert_eq!(CjkWordSplitter.split_words("我 每天abc吃"), vec!["我", "每", "天", "abc", "吃"]);
        assert_eq!(WhitespaceWordSplitter.split_words("我 每天abc吃"), vec!["我", "每天abc吃"]);
    }

    #[test]
    fn sentence_terminators() {
        let s = TerminatorSentenceSplitter;
        assert_eq!(s.split_sentences("x. y."), vec!["x.", "y."]);
        assert_eq!(s.split_sentences("3.14 is pi"), vec!["3.14 is pi"]);
        assert_eq!(s.split_sentences("好。再见！"), vec!["好。", "再见！"]);
        assert_eq!(s.split_sentences("   "), Vec::<&str>::new());
    }
}
