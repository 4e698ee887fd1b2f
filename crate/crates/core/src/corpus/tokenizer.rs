use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 128;

const CONTINUATION_PREFIX: &str = "##";
const DEMO_VOCAB: &str = include_str!("../../data/demo/tokens.txt");

/// Token ids for one input text; position 0 is always the CLS id.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Lowercasing, whitespace-splitting, greedy longest-match subword tokenizer.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    cls: u32,
    pad: u32,
    unk: u32,
    max_len: usize,
}

impl Tokenizer {
    /// Builds from an id-ordered token list; `[CLS]`, `[PAD]` and `[UNK]` must
    /// be present.
    pub fn new(tokens: Vec<String>, max_len: usize) -> Result<Self> {
        if max_len < 2 {
            return Err(Error::Config(format!("max_len must be at least 2, got {max_len}")));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if !tok.is_empty() {
                ids.entry(tok.clone()).or_insert(i as u32);
            }
        }
        let special = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("tokenizer vocabulary lacks {name}")))
        };
        let (cls, pad, unk) = (special("[CLS]")?, special("[PAD]")?, special("[UNK]")?);
        Ok(Tokenizer {
            tokens,
            ids,
            cls,
            pad,
            unk,
            max_len,
        })
    }

    /// One token per line; the id is the 0-based line number.
    pub fn from_vocab_text(text: &str, max_len: usize) -> Result<Self> {
        Tokenizer::new(
            text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect(),
            max_len,
        )
    }

    pub fn from_file(path: impl AsRef<Path>, max_len: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading tokenizer vocabulary {}", path.display()), e))?;
        Tokenizer::from_vocab_text(&text, max_len)
    }

    /// Specials followed by `words` (lowercased, deduplicated in order).
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>, max_len: usize) -> Result<Self> {
        let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]"].map(String::from).to_vec();
        for w in words {
            let w = w.to_lowercase();
            if !tokens.contains(&w) {
                tokens.push(w);
            }
        }
        Tokenizer::new(tokens, max_len)
    }

    /// The small vocabulary shipped with the demo corpus.
    pub fn demo(max_len: usize) -> Self {
        Tokenizer::from_vocab_text(DEMO_VOCAB, max_len).expect("demo vocabulary is well formed")
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let mut ids = vec![self.cls];
        for word in text.to_lowercase().split_whitespace() {
            if ids.len() >= self.max_len {
                break;
            }
            self.segment(word, &mut ids);
        }
        ids.truncate(self.max_len);
        TokenSequence { ids }
    }

    /// Greedy longest-match segmentation of one word; any unmatched remainder
    /// turns the whole word into UNK.
    fn segment(&self, word: &str, out: &mut Vec<u32>) {
        if let Some(&id) = self.ids.get(word) {
            out.push(id);
            return;
        }
        let chars: Vec<char> = word.chars().collect();
        let mark = out.len();
        let mut start = 0;
        let mut piece = String::new();
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                piece.clear();
                if start > 0 {
                    piece.push_str(CONTINUATION_PREFIX);
                }
                piece.extend(&chars[start..end]);
                if let Some(&id) = self.ids.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(mark);
                    out.push(self.unk);
                    return;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(max_len: usize) -> Tokenizer {
        Tokenizer::from_vocab_text("[PAD]\n[UNK]\n[CLS]\ndiabetes\nhead\n##ache\n##s\nmellitus", max_len)
            .unwrap()
    }

    #[test]
    fn whole_word_hit() {
        let t = tok(128);
        assert_eq!(t.tokenize("Diabetes").ids, vec![2, 3]);
    }

    #[test]
    fn greedy_subwords() {
        let t = tok(128);
        assert_eq!(t.tokenize("HEADACHES").ids, vec![2, 4, 5, 6]);
    }

    #[test]
    fn unknown_word_maps_to_unk() {
        let t = tok(128);
        assert_eq!(t.tokenize("zzz").ids, vec![2, 1]);
        // partial match without a continuation piece is still UNK
        assert_eq!(t.tokenize("headx").ids, vec![2, 1]);
    }

    #[test]
    fn truncates_to_max_len() {
        let t = tok(128);
        let text = vec!["diabetes"; 500].join(" ");
        let seq = t.tokenize(&text);
        assert_eq!(seq.len(), 128);
        assert_eq!(seq.ids[0], t.cls_id());
        assert_eq!(seq.ids.iter().filter(|&&i| i == t.cls_id()).count(), 1);
    }

    #[test]
    fn missing_specials_rejected() {
        assert!(Tokenizer::from_vocab_text("[PAD]\n[CLS]\nfoo", 16).is_err());
    }

    #[test]
    fn demo_vocab_loads() {
        let t = Tokenizer::demo(DEFAULT_MAX_LEN);
        assert!(t.id("diabetes").is_some());
        assert_ne!(t.tokenize("finding relating to institutionalization").ids[1], t.unk_id());
    }
}
