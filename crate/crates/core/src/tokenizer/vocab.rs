use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// BERT-format vocabulary: one token per line, id = zero-based line number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pad: u32,
    unk: u32,
    cls: u32,
    sep: u32,
    mask: u32,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if let Some(first) = index.insert(t.clone(), i as u32) {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("duplicate token {t:?} (first seen on line {})", first + 1),
                });
            }
        }
        let special = |name: &str| {
            index.get(name).copied().ok_or_else(|| Error::Format {
                line: tokens.len(),
                message: format!("missing special token {name}"),
            })
        };
        Ok(Self {
            pad: special(PAD)?,
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            mask: special(MASK)?,
            tokens,
            index,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serializes back to the one-token-per-line format.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn mask_id(&self) -> u32 {
        self.mask
    }

    /// Structural specials. `[UNK]` is an ordinary word piece.
    pub fn is_special(&self, id: u32) -> bool {
        [self.pad, self.cls, self.sep, self.mask].contains(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_line_vocab() {
        let v = Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\n").unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("a"), Some(5));
        assert_eq!(v.pad_id(), 0);
        assert_eq!(v.token(3), Some("[SEP]"));
    }

    #[test]
    fn duplicate_names_line() {
        let err = Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nthe\ncat\nthe\n").unwrap_err();
        match err {
            Error::Format { line, message } => {
                assert_eq!(line, 8);
                assert!(message.contains("the"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_special() {
        let err = Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\na\n").unwrap_err();
        assert!(err.to_string().contains("[MASK]"));
    }

    #[test]
    fn bert_sized_vocab() {
        let mut lines: Vec<String> = vec![PAD.into()];
        lines.extend((1..100).map(|i| format!("[unused{i}]")));
        lines.extend([UNK, CLS, SEP, MASK].map(String::from));
        let mut cp = 0x4E00u32;
        while lines.len() < 21128 {
            lines.push(char::from_u32(cp).unwrap().to_string());
            cp += 1;
        }
        let v = Vocab::from_tokens(lines).unwrap();
        assert_eq!(v.len(), 21128);
        assert_eq!(v.cls_id(), 101);
    }

    #[test]
    fn special_ids_are_distinct_from_unk() {
        let v = Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\n").unwrap();
        assert!(v.is_special(v.cls_id()));
        assert!(v.is_special(v.pad_id()));
        assert!(!v.is_special(v.unk_id()));
        assert!(!v.is_special(5));
    }
}
