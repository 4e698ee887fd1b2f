//! Flat run configuration: corpus paths, augmentation, model shape, grids and
//! every training field, all at the top level of one TOML table.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use labelaug::augment::{Strategy, DEFAULT_MAX_VARIANTS};
use labelaug::corpus::{PerAspect, DEFAULT_MAX_LEN};
use labelaug::model::{CnnConfig, EncoderArch, EncoderConfig, ModelConfig};
use labelaug::trainer::{PretrainConfig, TrainConfig, DEFAULT_DROPOUT_GRID};
use labelaug::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Transformer,
    Cnn,
}

/// Documents scored by `eval`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    #[default]
    Test,
    All,
}

/// Everything outside [`TrainConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Subcommand that wrote a manifest; informational.
    pub command: Option<String>,
    pub data: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Tokenizer vocabulary; without it one is built from the corpus words.
    pub tokens: Option<PathBuf>,
    pub artificial: Option<PathBuf>,
    /// Checkpoint loaded before training.
    pub init: Option<PathBuf>,
    /// Take only the encoder tensors from `init`.
    pub encoder_only: bool,
    /// Model checkpoint scored by `eval`.
    pub model: Option<PathBuf>,
    /// Fixed decision threshold for `eval`; the checkpoint's tuned value otherwise.
    pub threshold: Option<f64>,
    pub eval_split: EvalSplit,
    pub strategy: Option<Strategy>,
    pub lexicon: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub max_variants: usize,
    pub augment_seed: u64,
    pub split_seed: u64,
    pub encoder: EncoderKind,
    pub max_len: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub embed_dim: usize,
    pub filter_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub d_hidden: usize,
    pub dropout_grid: Vec<f64>,
    pub fractions: Vec<f64>,
    pub pretrain_batch_size: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_dropout: f64,
    pub pretrain_seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        let enc = EncoderConfig::desk(0);
        let cnn = CnnConfig::desk(0);
        let pre = PretrainConfig::default();
        RunSettings {
            command: None,
            data: None,
            vocab: None,
            tokens: None,
            artificial: None,
            init: None,
            encoder_only: false,
            model: None,
            threshold: None,
            eval_split: EvalSplit::Test,
            strategy: None,
            lexicon: None,
            templates: None,
            max_variants: DEFAULT_MAX_VARIANTS,
            augment_seed: 0,
            split_seed: 0,
            encoder: EncoderKind::Transformer,
            max_len: DEFAULT_MAX_LEN,
            d_model: enc.d_model,
            n_blocks: enc.n_blocks,
            n_heads: enc.n_heads,
            d_ff: enc.d_ff,
            embed_dim: cnn.embed_dim,
            filter_sizes: cnn.filter_sizes,
            filters_per_size: cnn.filters_per_size,
            d_hidden: 64,
            dropout_grid: DEFAULT_DROPOUT_GRID.to_vec(),
            fractions: (0..=10).map(|i| i as f64 / 5.0).collect(),
            pretrain_batch_size: pre.batch_size,
            pretrain_epochs: pre.epochs,
            pretrain_lr: pre.lr,
            pretrain_dropout: pre.dropout,
            pretrain_seed: pre.seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub run: RunSettings,
    pub train: TrainConfig,
}

fn train_keys() -> BTreeSet<String> {
    let value = toml::Value::try_from(TrainConfig::default()).expect("train config serializes");
    let mut keys: BTreeSet<String> = value.as_table().expect("table").keys().cloned().collect();
    // Optional fields are absent from the serialized defaults.
    keys.insert("grad_clip".into());
    keys
}

impl RunConfig {
    /// Parses a flat TOML table. Relative paths are resolved against `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self, Error> {
        let bad = |m: String| Error::Config(format!("{}: {m}", origin.display()));
        let table: toml::Table = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let keys = train_keys();
        let (train, run): (toml::Table, toml::Table) = table.into_iter().partition(|(k, _)| keys.contains(k));
        let train: TrainConfig = toml::Value::Table(train).try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        let mut run: RunSettings = toml::Value::Table(run).try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        run.resolve_paths(base);
        Ok(RunConfig { run, train })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, path, base)
    }

    /// The resolved configuration as one flat table, every default written.
    pub fn to_toml(&self) -> String {
        let mut table = match toml::Value::try_from(&self.run).expect("settings serialize") {
            toml::Value::Table(t) => t,
            _ => unreachable!("struct serializes to a table"),
        };
        if let toml::Value::Table(t) = toml::Value::try_from(&self.train).expect("train config serializes") {
            table.extend(t);
        }
        toml::to_string(&table).expect("table serializes")
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.train.validate()?;
        let r = &self.run;
        if let Some(t) = r.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold must lie in [0, 1], got {t}")));
            }
        }
        if r.max_variants == 0 {
            return Err(Error::Config("max_variants must be at least 1".into()));
        }
        if r.pretrain_batch_size == 0 || r.pretrain_epochs == 0 {
            return Err(Error::Config("pretrain_batch_size and pretrain_epochs must be at least 1".into()));
        }
        self.encoder_arch(1).validate()
    }

    pub fn encoder_arch(&self, vocab_size: usize) -> EncoderArch {
        let r = &self.run;
        match r.encoder {
            EncoderKind::Transformer => EncoderArch::Transformer(EncoderConfig {
                vocab_size,
                max_len: r.max_len,
                d_model: r.d_model,
                n_blocks: r.n_blocks,
                n_heads: r.n_heads,
                d_ff: r.d_ff,
            }),
            EncoderKind::Cnn => EncoderArch::Cnn(CnnConfig {
                vocab_size,
                max_len: r.max_len,
                embed_dim: r.embed_dim,
                filter_sizes: r.filter_sizes.clone(),
                filters_per_size: r.filters_per_size,
                d_model: r.d_model,
            }),
        }
    }

    pub fn model_config(&self, vocab_size: usize, head_sizes: PerAspect<usize>) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder_arch(vocab_size),
            d_hidden: self.run.d_hidden,
            head_sizes,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let r = &self.run;
        PretrainConfig {
            batch_size: r.pretrain_batch_size,
            epochs: r.pretrain_epochs,
            lr: r.pretrain_lr,
            dropout: r.pretrain_dropout,
            seed: r.pretrain_seed,
            d_hidden: r.d_hidden,
        }
    }
}

impl RunSettings {
    fn resolve_paths(&mut self, base: &Path) {
        for path in self.paths_mut().into_iter().flatten() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 8] {
        [
            &mut self.model,
            &mut self.data,
            &mut self.vocab,
            &mut self.tokens,
            &mut self.artificial,
            &mut self.init,
            &mut self.lexicon,
            &mut self.templates,
        ]
    }

    /// Fails unless every configured input path exists; absolute forms are
    /// stored so the manifest is location independent.
    pub fn check_paths(&mut self) -> Result<(), Error> {
        for p in self.paths_mut().into_iter().flatten() {
            let abs = fs::canonicalize(&*p).map_err(|source| Error::Io {
                context: format!("input {}", p.display()),
                source,
            })?;
            *p = abs;
        }
        Ok(())
    }
}
