//! Artificial training instances manufactured from label-texts.
//!
//! | strategy | text |
//! |----------|------|
//! | LI | the label-text |
//! | LIS | LI plus one-word synonym variants |
//! | LISA | each LIS text prefixed by the aspect word |
//! | LISAAS | each LIS text appended to the aspect's template sentence |

mod lexicon;

pub use lexicon::{synonym_variants, AspectTemplates, SynonymLexicon};

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Aspect, Document, LabelVocabulary, PerAspect, TokenSequence, Tokenizer};
use crate::error::{Error, Result};
use crate::neural::{Real, RngStream};

pub const DEFAULT_MAX_VARIANTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Li,
    Lis,
    Lisa,
    Lisaas,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Li, Strategy::Lis, Strategy::Lisa, Strategy::Lisaas];

    pub fn needs_lexicon(self) -> bool {
        self != Strategy::Li
    }

    pub fn needs_templates(self) -> bool {
        self == Strategy::Lisaas
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Li => "li",
            Strategy::Lis => "lis",
            Strategy::Lisa => "lisa",
            Strategy::Lisaas => "lisaas",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_uppercase())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?} (expected li, lis, lisa or lisaas)")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Real {
        id: String,
    },
    Artificial {
        strategy: Strategy,
        aspect: Aspect,
        /// Label index (not head slot) of the source label.
        index: usize,
    },
}

/// Text, tokens and positive head slots of one training example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingInstance {
    pub text: String,
    pub tokens: TokenSequence,
    /// Positive head slots per aspect.
    pub targets: PerAspect<BTreeSet<usize>>,
    pub provenance: Provenance,
}

impl TrainingInstance {
    /// A real instance from an annotated document.
    pub fn real(doc: &Document, vocab: &LabelVocabulary, tok: &Tokenizer) -> Result<Self> {
        let mut targets = PerAspect::<BTreeSet<usize>>::default();
        for (aspect, gold) in doc.gold.iter() {
            for &i in gold {
                let slot = vocab.slot(aspect, i).ok_or_else(|| {
                    Error::Validation(format!(
                        "record {:?}: {aspect} label index {i} is not in the vocabulary",
                        doc.id
                    ))
                })?;
                targets[aspect].insert(slot);
            }
        }
        Ok(TrainingInstance {
            text: doc.text.clone(),
            tokens: tok.tokenize(&doc.text),
            targets,
            provenance: Provenance::Real { id: doc.id.clone() },
        })
    }

    pub fn is_artificial(&self) -> bool {
        matches!(self.provenance, Provenance::Artificial { .. })
    }

    /// Dense 0/1 target vectors with the given head widths.
    pub fn multi_hot<T: Real>(&self, sizes: &PerAspect<usize>) -> PerAspect<Vec<T>> {
        PerAspect::from_fn(|a| {
            let mut v = vec![T::zero(); sizes[a]];
            for &slot in &self.targets[a] {
                v[slot] = T::one();
            }
            v
        })
    }
}

pub fn real_instances(docs: &[Document], vocab: &LabelVocabulary, tok: &Tokenizer) -> Result<Vec<TrainingInstance>> {
    docs.iter().map(|d| TrainingInstance::real(d, vocab, tok)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub max_variants: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_variants: DEFAULT_MAX_VARIANTS,
            seed: 0,
        }
    }
}

/// Label-text variants for one label: the original first, then synonyms.
fn label_texts(strategy: Strategy, text: &str, lex: Option<&SynonymLexicon>, seed: u64, k: usize) -> Vec<String> {
    let mut texts = vec![text.to_string()];
    if let (true, Some(lex)) = (strategy.needs_lexicon(), lex) {
        texts.extend(synonym_variants(text, lex, seed, k));
    }
    texts
}

/// Builds every artificial instance for `vocab` under `strategy`, in
/// vocabulary order (aspects in reporting order, labels in file order).
pub fn construct_instances(
    strategy: Strategy,
    vocab: &LabelVocabulary,
    lex: Option<&SynonymLexicon>,
    templates: Option<&AspectTemplates>,
    tok: &Tokenizer,
    cfg: &AugmentConfig,
) -> Result<Vec<TrainingInstance>> {
    if strategy.needs_lexicon() && lex.is_none() {
        return Err(Error::Config(format!("strategy {strategy} requires a synonym lexicon")));
    }
    if strategy.needs_templates() && templates.is_none() {
        return Err(Error::Config(format!("strategy {strategy} requires aspect templates")));
    }
    if cfg.max_variants == 0 {
        return Err(Error::Config("max_variants must be at least 1".into()));
    }
    let mut out = Vec::new();
    for aspect in Aspect::ALL {
        for (slot, label) in vocab.labels(aspect).iter().enumerate() {
            let seed = RngStream::derive(cfg.seed, "label_synonyms", label_key(aspect, label.index)).next_u64();
            for variant in label_texts(strategy, &label.text, lex, seed, cfg.max_variants) {
                let text = match (strategy, templates) {
                    (Strategy::Li | Strategy::Lis, _) => variant,
                    (Strategy::Lisa, _) => format!("{} {variant}", aspect.prefix_word()),
                    (Strategy::Lisaas, Some(t)) => t.apply(aspect, &variant),
                    (Strategy::Lisaas, None) => unreachable!("checked above"),
                };
                let mut targets = PerAspect::<BTreeSet<usize>>::default();
                targets[aspect].insert(slot);
                out.push(TrainingInstance {
                    tokens: tok.tokenize(&text),
                    text,
                    targets,
                    provenance: Provenance::Artificial {
                        strategy,
                        aspect,
                        index: label.index,
                    },
                });
            }
        }
    }
    Ok(out)
}

fn label_key(aspect: Aspect, index: usize) -> u64 {
    ((aspect.position() as u64) << 48) ^ index as u64
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    text: String,
    #[serde(default)]
    population: Vec<usize>,
    #[serde(default)]
    interventions: Vec<usize>,
    #[serde(default)]
    outcomes: Vec<usize>,
    provenance: Provenance,
}

/// JSON Lines rendering. Targets are written as label indexes; token ids are
/// recomputed on reading so one file serves any tokenizer.
pub fn instances_to_jsonl(instances: &[TrainingInstance], vocab: &LabelVocabulary) -> String {
    let mut out = String::new();
    for inst in instances {
        let indexes = |a: Aspect| -> Vec<usize> {
            inst.targets[a].iter().map(|&s| vocab.labels(a)[s].index).collect()
        };
        let rec = InstanceRecord {
            text: inst.text.clone(),
            population: indexes(Aspect::Population),
            interventions: indexes(Aspect::InterventionComparator),
            outcomes: indexes(Aspect::Outcome),
            provenance: inst.provenance.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("instance serializes"));
        out.push('\n');
    }
    out
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[TrainingInstance], vocab: &LabelVocabulary) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(instances_to_jsonl(instances, vocab).as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn parse_instances(
    content: &str,
    path: &Path,
    vocab: &LabelVocabulary,
    tok: &Tokenizer,
) -> Result<Vec<TrainingInstance>> {
    let mut out = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, n + 1, e.to_string()))?;
        let mut targets = PerAspect::<BTreeSet<usize>>::default();
        for (aspect, idx) in [
            (Aspect::Population, &rec.population),
            (Aspect::InterventionComparator, &rec.interventions),
            (Aspect::Outcome, &rec.outcomes),
        ] {
            for &i in idx {
                let slot = vocab.slot(aspect, i).ok_or_else(|| {
                    Error::format(path, n + 1, format!("{aspect} label index {i} is not in the vocabulary"))
                })?;
                targets[aspect].insert(slot);
            }
        }
        if let Provenance::Artificial { aspect, index, .. } = &rec.provenance {
            let positives: usize = targets.iter().map(|(_, s)| s.len()).sum();
            if positives != 1 || vocab.slot(*aspect, *index).map(|s| targets[*aspect].contains(&s)) != Some(true) {
                return Err(Error::format(
                    path,
                    n + 1,
                    "artificial instance must have exactly its source label as target",
                ));
            }
        }
        out.push(TrainingInstance {
            tokens: tok.tokenize(&rec.text),
            text: rec.text,
            targets,
            provenance: rec.provenance,
        });
    }
    Ok(out)
}

pub fn load_instances(path: impl AsRef<Path>, vocab: &LabelVocabulary, tok: &Tokenizer) -> Result<Vec<TrainingInstance>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading instances {}", path.display()), e))?;
    parse_instances(&content, path, vocab, tok)
}
