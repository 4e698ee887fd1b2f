use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::corpus::{Aspect, PerAspect};
use crate::error::{Error, Result};
use crate::neural::RngStream;

const DEMO_LEXICON: &str = include_str!("../../data/demo/lexicon.json");

/// Lowercase word → single-word synonyms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// Lowercases keys and synonyms and drops repeated synonyms. Rejects
    /// empty lists, multi-word entries and words mapped to themselves.
    pub fn new(raw: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (word, synonyms) in raw {
            let key = word.trim().to_lowercase();
            check_single_word(&key, &word)?;
            if synonyms.is_empty() {
                return Err(Error::Validation(format!("lexicon entry {word:?} has no synonyms")));
            }
            let mut seen = BTreeSet::new();
            let mut list = Vec::with_capacity(synonyms.len());
            for s in synonyms {
                let syn = s.trim().to_lowercase();
                check_single_word(&syn, &s)?;
                if syn == key {
                    return Err(Error::Validation(format!("lexicon maps {word:?} to itself")));
                }
                if seen.insert(syn.clone()) {
                    list.push(syn);
                }
            }
            let slot: &mut Vec<String> = entries.entry(key).or_default();
            for syn in list {
                if !slot.contains(&syn) {
                    slot.push(syn);
                }
            }
        }
        Ok(SynonymLexicon { entries })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("lexicon: {e}")))?;
        SynonymLexicon::new(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading lexicon {}", path.display()), e))?;
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))?;
        SynonymLexicon::new(raw)
    }

    /// The lexicon shipped with the demo corpus.
    pub fn demo() -> Self {
        SynonymLexicon::from_json(DEMO_LEXICON).expect("demo lexicon is valid")
    }

    /// Case-insensitive lookup.
    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_single_word(word: &str, original: &str) -> Result<()> {
    if word.is_empty() || word.chars().any(char::is_whitespace) {
        return Err(Error::Validation(format!(
            "lexicon entries must be single words, got {original:?}"
        )));
    }
    Ok(())
}

/// One sentence per aspect; the label-text is appended after a space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AspectTemplates {
    sentences: PerAspect<String>,
}

impl Default for AspectTemplates {
    fn default() -> Self {
        AspectTemplates {
            sentences: PerAspect {
                population: "The population of the trial consists of patients with".into(),
                intervention: "The intervention administered in the trial was".into(),
                outcome: "The outcome measured in the trial was".into(),
            },
        }
    }
}

impl AspectTemplates {
    pub fn new(sentences: PerAspect<String>) -> Result<Self> {
        let sentences = sentences.map(|_, s| s.trim().to_string());
        if let Some((a, _)) = sentences.iter().find(|(_, s)| s.is_empty()) {
            return Err(Error::Validation(format!("{a} template is empty")));
        }
        Ok(AspectTemplates { sentences })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading templates {}", path.display()), e))?;
        AspectTemplates::parse(&text, path)
    }

    /// Parses `aspect<TAB>sentence` lines; each aspect exactly once.
    pub fn parse(content: &str, path: &Path) -> Result<Self> {
        let mut found: PerAspect<Option<String>> = PerAspect::default();
        for (n, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let Some((aspect, sentence)) = line.split_once('\t') else {
                return Err(Error::format(path, n + 1, "expected aspect<TAB>sentence"));
            };
            let aspect = Aspect::parse(aspect)
                .ok_or_else(|| Error::format(path, n + 1, format!("unknown aspect {aspect:?}")))?;
            if sentence.trim().is_empty() {
                return Err(Error::format(path, n + 1, "empty template sentence"));
            }
            if found[aspect].replace(sentence.trim().to_string()).is_some() {
                return Err(Error::format(path, n + 1, format!("second template for {aspect}")));
            }
        }
        let missing: Vec<String> = found
            .iter()
            .filter(|(_, s)| s.is_none())
            .map(|(a, _)| a.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::format(path, 0, format!("missing templates for {}", missing.join(", "))));
        }
        AspectTemplates::new(found.map(|_, s| s.clone().unwrap_or_default()))
    }

    pub fn sentence(&self, aspect: Aspect) -> &str {
        &self.sentences[aspect]
    }

    pub fn apply(&self, aspect: Aspect, label_text: &str) -> String {
        format!("{} {}", self.sentences[aspect], label_text)
    }
}

/// Up to `max_variants` distinct one-word synonym substitutions of
/// `label_text`. Positions are visited in a seed-driven order; each pass takes
/// the next unused synonym of every replaceable position. Replacements copy
/// the casing style of the word they replace.
pub fn synonym_variants(
    label_text: &str,
    lex: &SynonymLexicon,
    seed: u64,
    max_variants: usize,
) -> Vec<String> {
    let words: Vec<&str> = label_text.split_whitespace().collect();
    let mut positions: Vec<(usize, &[String])> = words
        .iter()
        .enumerate()
        .filter_map(|(i, w)| lex.synonyms(w).map(|s| (i, s)))
        .collect();
    RngStream::derive(seed, "synonym_positions", 0).shuffle(&mut positions);

    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let depth = positions.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    'outer: for round in 0..depth {
        for &(pos, synonyms) in &positions {
            if out.len() >= max_variants {
                break 'outer;
            }
            let Some(syn) = synonyms.get(round) else {
                continue;
            };
            let mut edited: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            edited[pos] = match_case(words[pos], syn);
            let text = edited.join(" ");
            if seen.insert(text.to_lowercase()) {
                out.push(text);
            }
        }
    }
    out
}

fn match_case(original: &str, replacement: &str) -> String {
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return replacement.to_uppercase();
    }
    match letters.first() {
        Some(c) if c.is_uppercase() => {
            let mut chars = replacement.chars();
            chars
                .next()
                .map(|f| f.to_uppercase().chain(chars).collect())
                .unwrap_or_default()
        }
        _ => replacement.to_string(),
    }
}
