//! Documents, label vocabularies, gold annotations and dataset splits.
//!
//! Label vocabularies are TSV files (`index<TAB>aspect<TAB>text`) and
//! datasets are JSON Lines with one trial record per line. Within an aspect,
//! labels keep file order; a label's position in that order is its output
//! slot in the aspect's classification head.

mod tokenizer;

pub use tokenizer::{TokenSequence, Tokenizer, DEFAULT_MAX_LEN};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::ops::{Index, IndexMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::RngStream;

/// The three clinically salient aspects of a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aspect {
    Population,
    InterventionComparator,
    Outcome,
}

impl Aspect {
    /// Reporting order.
    pub const ALL: [Aspect; 3] = [
        Aspect::Population,
        Aspect::InterventionComparator,
        Aspect::Outcome,
    ];

    pub fn position(self) -> usize {
        match self {
            Aspect::Population => 0,
            Aspect::InterventionComparator => 1,
            Aspect::Outcome => 2,
        }
    }

    /// Parses the aspect column of a vocabulary file. Accepts the canonical
    /// names plus the common short forms (`P`, `IC`, `I`, `O`, `Intervention`).
    pub fn parse(token: &str) -> Option<Aspect> {
        match token.trim().to_ascii_lowercase().as_str() {
            "population" | "p" => Some(Aspect::Population),
            "interventioncomparator" | "intervention" | "interventions" | "ic" | "i" => {
                Some(Aspect::InterventionComparator)
            }
            "outcome" | "outcomes" | "o" => Some(Aspect::Outcome),
            _ => None,
        }
    }

    /// The word prefixed to label-texts by the aspect-prefix strategy.
    pub fn prefix_word(self) -> &'static str {
        match self {
            Aspect::Population => "Population",
            Aspect::InterventionComparator => "Intervention",
            Aspect::Outcome => "Outcome",
        }
    }

    /// Short tag used in parameter names (`head.p`, `head.ic`, `head.o`).
    pub fn short(self) -> &'static str {
        match self {
            Aspect::Population => "p",
            Aspect::InterventionComparator => "ic",
            Aspect::Outcome => "o",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Aspect::Population => "Population",
            Aspect::InterventionComparator => "InterventionComparator",
            Aspect::Outcome => "Outcome",
        };
        f.write_str(name)
    }
}

/// One value per aspect.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerAspect<T> {
    pub population: T,
    pub intervention: T,
    pub outcome: T,
}

impl<T> PerAspect<T> {
    pub fn from_fn(mut f: impl FnMut(Aspect) -> T) -> Self {
        PerAspect {
            population: f(Aspect::Population),
            intervention: f(Aspect::InterventionComparator),
            outcome: f(Aspect::Outcome),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Aspect, &T) -> U) -> PerAspect<U> {
        PerAspect::from_fn(|a| f(a, &self[a]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Aspect, &T)> {
        Aspect::ALL.into_iter().map(move |a| (a, &self[a]))
    }
}

impl<T> Index<Aspect> for PerAspect<T> {
    type Output = T;

    fn index(&self, aspect: Aspect) -> &T {
        match aspect {
            Aspect::Population => &self.population,
            Aspect::InterventionComparator => &self.intervention,
            Aspect::Outcome => &self.outcome,
        }
    }
}

impl<T> IndexMut<Aspect> for PerAspect<T> {
    fn index_mut(&mut self, aspect: Aspect) -> &mut T {
        match aspect {
            Aspect::Population => &mut self.population,
            Aspect::InterventionComparator => &mut self.intervention,
            Aspect::Outcome => &mut self.outcome,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub index: usize,
    pub aspect: Aspect,
    pub text: String,
}

/// Per-aspect ordered label lists with reverse lookups.
#[derive(Clone, Debug, Default)]
pub struct LabelVocabulary {
    labels: PerAspect<Vec<Label>>,
    slot_by_index: PerAspect<HashMap<usize, usize>>,
    slot_by_text: PerAspect<HashMap<String, usize>>,
}

fn has_alphabetic_token(text: &str) -> bool {
    text.split_whitespace()
        .any(|w| w.chars().any(char::is_alphabetic))
}

impl LabelVocabulary {
    /// Builds a vocabulary, validating the same invariants as the file loader.
    pub fn from_labels(labels: impl IntoIterator<Item = Label>) -> Result<Self> {
        let mut vocab = LabelVocabulary::default();
        for label in labels {
            vocab.push(label).map_err(Error::Validation)?;
        }
        Ok(vocab)
    }

    fn push(&mut self, label: Label) -> std::result::Result<(), String> {
        let text = label.text.trim();
        if text.is_empty() {
            return Err("empty label-text".into());
        }
        if !has_alphabetic_token(text) {
            return Err(format!("label-text {text:?} has no alphabetic token"));
        }
        let aspect = label.aspect;
        if self.slot_by_index[aspect].contains_key(&label.index) {
            return Err(format!("duplicate index {} for aspect {aspect}", label.index));
        }
        let key = text.to_lowercase();
        if self.slot_by_text[aspect].contains_key(&key) {
            return Err(format!("duplicate label-text {text:?} for aspect {aspect}"));
        }
        let slot = self.labels[aspect].len();
        self.slot_by_index[aspect].insert(label.index, slot);
        self.slot_by_text[aspect].insert(key, slot);
        self.labels[aspect].push(Label {
            index: label.index,
            aspect,
            text: text.to_string(),
        });
        Ok(())
    }

    pub fn labels(&self, aspect: Aspect) -> &[Label] {
        &self.labels[aspect]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        Aspect::ALL.into_iter().flat_map(move |a| self.labels[a].iter())
    }

    pub fn size(&self, aspect: Aspect) -> usize {
        self.labels[aspect].len()
    }

    pub fn sizes(&self) -> PerAspect<usize> {
        PerAspect::from_fn(|a| self.size(a))
    }

    pub fn len(&self) -> usize {
        Aspect::ALL.iter().map(|&a| self.size(a)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Head slot of the label with the given index.
    pub fn slot(&self, aspect: Aspect, index: usize) -> Option<usize> {
        self.slot_by_index[aspect].get(&index).copied()
    }

    pub fn by_index(&self, aspect: Aspect, index: usize) -> Option<&Label> {
        self.slot(aspect, index).map(|s| &self.labels[aspect][s])
    }

    /// Case-insensitive lookup by label-text.
    pub fn by_text(&self, aspect: Aspect, text: &str) -> Option<&Label> {
        self.slot_by_text[aspect]
            .get(&text.trim().to_lowercase())
            .map(|&s| &self.labels[aspect][s])
    }
}

/// Reads a `index<TAB>aspect<TAB>text` vocabulary file; `#` lines are comments.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<LabelVocabulary> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading vocabulary {}", path.display()), e))?;
    parse_vocabulary(&content, path)
}

pub(crate) fn parse_vocabulary(content: &str, path: &Path) -> Result<LabelVocabulary> {
    let mut vocab = LabelVocabulary::default();
    for (n, raw) in content.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        if fields.len() < 2 {
            return Err(Error::format(path, line_no, "expected index<TAB>aspect<TAB>text"));
        }
        let index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, line_no, format!("bad label index {:?}", fields[0])))?;
        let aspect = Aspect::parse(fields[1])
            .ok_or_else(|| Error::format(path, line_no, format!("unknown aspect {:?}", fields[1])))?;
        let text = fields.get(2).copied().unwrap_or("");
        vocab
            .push(Label {
                index,
                aspect,
                text: text.to_string(),
            })
            .map_err(|m| Error::format(path, line_no, m))?;
    }
    Ok(vocab)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Gold label indexes (not head slots) per aspect.
    pub gold: PerAspect<BTreeSet<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub documents: Vec<Document>,
}

impl Dataset {
    /// Validates gold indexes against `vocab` and document ids for uniqueness.
    pub fn new(documents: Vec<Document>, vocab: &LabelVocabulary) -> Result<Self> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::Validation(format!("duplicate document id {:?}", doc.id)));
            }
            for (aspect, gold) in doc.gold.iter() {
                if let Some(bad) = gold.iter().find(|&&i| vocab.slot(aspect, i).is_none()) {
                    return Err(Error::Validation(format!(
                        "record {:?}: {aspect} label index {bad} is not in the vocabulary",
                        doc.id
                    )));
                }
            }
        }
        Ok(Dataset { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GoldRef {
    Index(usize),
    Text(String),
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    population: Vec<GoldRef>,
    #[serde(default)]
    interventions: Vec<GoldRef>,
    #[serde(default)]
    outcomes: Vec<GoldRef>,
}

/// Reads a JSON Lines dataset. Gold entries may be label indexes or
/// label-texts; texts are resolved through `vocab`.
pub fn load_dataset(path: impl AsRef<Path>, vocab: &LabelVocabulary) -> Result<Dataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading dataset {}", path.display()), e))?;
    parse_dataset(&content, path, vocab)
}

pub(crate) fn parse_dataset(content: &str, path: &Path, vocab: &LabelVocabulary) -> Result<Dataset> {
    let mut documents = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, n + 1, e.to_string()))?;
        let resolve = |aspect: Aspect, refs: Vec<GoldRef>| -> Result<BTreeSet<usize>> {
            refs.into_iter()
                .map(|r| match r {
                    GoldRef::Index(i) => Ok(i),
                    GoldRef::Text(t) => vocab.by_text(aspect, &t).map(|l| l.index).ok_or_else(|| {
                        Error::Validation(format!(
                            "record {:?}: {aspect} label {t:?} is not in the vocabulary",
                            raw.id
                        ))
                    }),
                })
                .collect()
        };
        let gold = PerAspect {
            population: resolve(Aspect::Population, raw.population)?,
            intervention: resolve(Aspect::InterventionComparator, raw.interventions)?,
            outcome: resolve(Aspect::Outcome, raw.outcomes)?,
        };
        documents.push(Document {
            id: raw.id,
            text: raw.text,
            gold,
        });
    }
    Dataset::new(documents, vocab)
}

/// Train / nested-validation / test partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Document>,
    pub nested_val: Vec<Document>,
    pub test: Vec<Document>,
}

impl Splits {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.nested_val.len(), self.test.len())
    }
}

/// Sizes `(train, nested_val, test)` for a corpus of `n` documents: 20% test,
/// then 20% of the remainder as nested validation, floored at each stage but
/// never below one document.
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < 3 {
        return Err(Error::Validation(format!(
            "cannot split {n} documents into three non-empty parts"
        )));
    }
    let test = (n / 5).max(1);
    let nested_val = ((n - test) / 5).max(1);
    Ok((n - test - nested_val, nested_val, test))
}

/// Seeded shuffle followed by the 80/20 then 20%-of-train partition.
pub fn split_dataset(dataset: &Dataset, seed: u64) -> Result<Splits> {
    let (n_train, n_val, _) = split_sizes(dataset.len())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    RngStream::derive(seed, "split", 0).shuffle(&mut order);
    let docs = |range: &[usize]| -> Vec<Document> {
        range.iter().map(|&i| dataset.documents[i].clone()).collect()
    };
    Ok(Splits {
        train: docs(&order[..n_train]),
        nested_val: docs(&order[n_train..n_train + n_val]),
        test: docs(&order[n_train + n_val..]),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub documents: usize,
    pub distinct: PerAspect<usize>,
    pub annotations: PerAspect<usize>,
}

pub fn dataset_stats(dataset: &Dataset) -> Stats {
    let mut used: PerAspect<BTreeSet<usize>> = PerAspect::default();
    let mut annotations = PerAspect::<usize>::default();
    for doc in &dataset.documents {
        for (aspect, gold) in doc.gold.iter() {
            used[aspect].extend(gold.iter().copied());
            annotations[aspect] += gold.len();
        }
    }
    Stats {
        documents: dataset.len(),
        distinct: used.map(|_, s| s.len()),
        annotations,
    }
}
