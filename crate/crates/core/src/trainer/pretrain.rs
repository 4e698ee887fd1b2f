use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::accumulate_instance;
use crate::corpus::{PerAspect, TokenSequence, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{EncoderArch, ModelConfig, MultiTaskModel};
use crate::neural::{Adam, AdamConfig, Gradients, ParamStore, Real, RngStream};

/// One document of the source tagging task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurrogateDoc {
    pub id: String,
    pub text: String,
    /// Positions in [`SurrogateCorpus::labels`].
    pub labels: BTreeSet<usize>,
}

/// Documents tagged from a single flat label vocabulary, numbered in order
/// of first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SurrogateCorpus {
    pub docs: Vec<SurrogateDoc>,
    pub labels: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTag {
    Index(u64),
    Text(String),
}

#[derive(Deserialize)]
struct RawSurrogate {
    id: String,
    text: String,
    labels: Vec<RawTag>,
}

/// Parses JSON Lines records `{id, text, labels}`; tags may be strings or
/// integers.
pub fn parse_surrogate(content: &str, path: &Path) -> Result<SurrogateCorpus> {
    let mut corpus = SurrogateCorpus::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids = HashSet::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSurrogate = serde_json::from_str(line).map_err(|e| Error::format(path, n + 1, e.to_string()))?;
        if !ids.insert(raw.id.clone()) {
            return Err(Error::format(path, n + 1, format!("duplicate document id {:?}", raw.id)));
        }
        let mut labels = BTreeSet::new();
        for tag in raw.labels {
            let name = match tag {
                RawTag::Index(i) => i.to_string(),
                RawTag::Text(t) if t.trim().is_empty() => {
                    return Err(Error::format(path, n + 1, "empty label"));
                }
                RawTag::Text(t) => t.trim().to_string(),
            };
            let next = index.len();
            let slot = *index.entry(name.clone()).or_insert_with(|| {
                corpus.labels.push(name);
                next
            });
            labels.insert(slot);
        }
        corpus.docs.push(SurrogateDoc {
            id: raw.id,
            text: raw.text,
            labels,
        });
    }
    if corpus.docs.is_empty() || corpus.labels.is_empty() {
        return Err(Error::Validation(format!(
            "{}: surrogate corpus needs at least one document and one label",
            path.display()
        )));
    }
    Ok(corpus)
}

pub fn load_surrogate(path: impl AsRef<Path>) -> Result<SurrogateCorpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading surrogate corpus {}", path.display()), e))?;
    parse_surrogate(&content, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Width of the hidden layer between encoder and the tag head.
    pub d_hidden: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            batch_size: 4,
            epochs: 50,
            lr: AdamConfig::default().lr,
            dropout: 0.1,
            seed: 0,
            d_hidden: 64,
        }
    }
}

pub struct PretrainOutcome<T: Real> {
    pub encoder: EncoderArch,
    /// Only the `encoder.*` tensors.
    pub params: ParamStore<T>,
    /// Mean minibatch loss per epoch.
    pub loss: Vec<f64>,
}

/// Trains encoder, one hidden layer and one tag head with binary
/// cross-entropy, then keeps only the encoder tensors.
pub fn pretrain<T: Real>(
    encoder: &EncoderArch,
    corpus: &SurrogateCorpus,
    tok: &Tokenizer,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome<T>> {
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("pretrain batch_size and epochs must be at least 1".into()));
    }
    if corpus.docs.is_empty() {
        return Err(Error::Validation("surrogate corpus is empty".into()));
    }
    // The tag head sits in the first head slot; the other two are width 1
    // and always masked out of the loss.
    let model_cfg = ModelConfig {
        encoder: encoder.clone(),
        d_hidden: cfg.d_hidden,
        head_sizes: PerAspect {
            population: corpus.labels.len(),
            intervention: 1,
            outcome: 1,
        },
    };
    let mut model = MultiTaskModel::<T>::new(model_cfg, cfg.seed)?;
    let mask = PerAspect {
        population: false,
        intervention: true,
        outcome: true,
    };
    let items: Vec<(TokenSequence, PerAspect<Vec<T>>)> = corpus
        .docs
        .iter()
        .map(|d| {
            let mut t = vec![T::zero(); corpus.labels.len()];
            for &l in &d.labels {
                t[l] = T::one();
            }
            let targets = PerAspect {
                population: t,
                intervention: vec![T::zero()],
                outcome: vec![T::zero()],
            };
            (tok.tokenize(&d.text), targets)
        })
        .collect();

    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, model.params());
    let root = RngStream::derive(cfg.seed, "pretrain", 0);
    let mut loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut es = root.child("epoch", epoch as u64);
        let mut order: Vec<usize> = (0..items.len()).collect();
        es.shuffle(&mut order);
        let mut sum = 0.0;
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            let bs = es.child("batch", b as u64);
            let mut acc = Gradients::zeros_like(model.params());
            let mut batch_loss = 0.0;
            for (k, &i) in batch.iter().enumerate() {
                let (tokens, targets) = &items[i];
                let l = accumulate_instance(
                    &model,
                    tokens,
                    targets,
                    &mask,
                    cfg.dropout,
                    None,
                    &bs.child("member", k as u64),
                    &mut acc,
                )?;
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: epoch + 1,
                        batch: b + 1,
                    });
                }
                batch_loss += l;
            }
            acc.scale(T::lit(1.0 / batch.len() as f64));
            adam.step(model.params_mut(), &mut acc);
            sum += batch_loss / batch.len() as f64;
        }
        loss.push(sum / batches.len() as f64);
    }
    let mut params = ParamStore::new();
    for (name, t) in model.params().iter() {
        if name.starts_with("encoder.") {
            params.insert(name, t.clone());
        }
    }
    Ok(PretrainOutcome {
        encoder: encoder.clone(),
        params,
        loss,
    })
}
