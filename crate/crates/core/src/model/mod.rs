//! Encoders, representation noise, the shared hidden layer and the three
//! aspect heads.
//!
//! Parameter names are stable and used verbatim in checkpoints:
//!
//! | name | shape |
//! |------|-------|
//! | `encoder.tok_emb` | `[vocab, d]` (CNN: `[vocab, embed_dim]`) |
//! | `encoder.pos_emb` | `[max_len, d]` |
//! | `encoder.block{i}.attn.{q,k,v,o}` / `..._b` | `[d, d]` / `[1, d]` |
//! | `encoder.block{i}.ln{1,2}.{gain,bias}` | `[1, d]` |
//! | `encoder.block{i}.ffn.{w1,w2}` / `ffn.{b1,b2}` | `[d, d_ff]`, `[d_ff, d]` |
//! | `encoder.conv{k}.{w,b}` | `[k * embed_dim, filters]`, `[1, filters]` |
//! | `encoder.dense.{w,b}` | `[sizes * filters, d]` |
//! | `noise.ln.{gain,bias}` | `[1, d]` |
//! | `shared.{w,b}` | `[d, d_hidden]` |
//! | `head.{p,ic,o}.{w,b}` | `[d_hidden, |V_a|]` |

mod cnn;
mod noise;
mod transformer;

pub use cnn::CnnConfig;
pub use noise::{inject_noise, noise_direction, perturb, NoiseConfig, NoiseScope};
pub use transformer::EncoderConfig;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Aspect, PerAspect, TokenSequence};
use crate::error::{Error, Result};
use crate::neural::{
    check_dropout_rate, dropout_mask, Graph, LayerNormParams, ParamId, ParamStore, Real, RngStream,
    Tensor, Var, LAYER_NORM_EPS, PROB_CLAMP,
};

/// Which encoder sits under the heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderArch {
    Transformer(EncoderConfig),
    Cnn(CnnConfig),
}

impl EncoderArch {
    pub fn d_model(&self) -> usize {
        match self {
            EncoderArch::Transformer(c) => c.d_model,
            EncoderArch::Cnn(c) => c.d_model,
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            EncoderArch::Transformer(c) => c.max_len,
            EncoderArch::Cnn(c) => c.max_len,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            EncoderArch::Transformer(c) => c.vocab_size,
            EncoderArch::Cnn(c) => c.vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EncoderArch::Transformer(c) => c.validate(),
            EncoderArch::Cnn(c) => c.validate(),
        }
    }

    /// Field-by-field differences, for checkpoint compatibility errors.
    pub fn differences(&self, other: &EncoderArch) -> Vec<String> {
        let a = serde_json::to_value(self).expect("config serializes");
        let b = serde_json::to_value(other).expect("config serializes");
        let (Some(a), Some(b)) = (a.as_object(), b.as_object()) else {
            return vec!["encoder".into()];
        };
        let mut keys: BTreeSet<&String> = a.keys().collect();
        keys.extend(b.keys());
        keys.into_iter()
            .filter(|k| a.get(*k) != b.get(*k))
            .map(|k| {
                format!(
                    "{k} ({} vs {})",
                    a.get(k).map_or("-".into(), |v| v.to_string()),
                    b.get(k).map_or("-".into(), |v| v.to_string())
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderArch,
    pub d_hidden: usize,
    pub head_sizes: PerAspect<usize>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.d_hidden == 0 {
            return Err(Error::Config("d_hidden must be positive".into()));
        }
        if let Some((a, _)) = self.head_sizes.iter().find(|(_, &n)| n == 0) {
            return Err(Error::Config(format!("{a} head has no labels")));
        }
        Ok(())
    }
}

/// Forward-pass mode. Evaluation never draws dropout masks or noise.
pub enum Mode<'a> {
    Eval,
    Train {
        dropout: f64,
        stream: &'a mut RngStream,
    },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

pub(crate) fn apply_dropout<T: Real>(g: &mut Graph<T>, x: Var, mode: &mut Mode) -> Var {
    match mode {
        Mode::Train { dropout, stream } if *dropout > 0.0 => {
            let mask = dropout_mask::<T>(g.value(x).len(), *dropout, stream);
            g.mul_const(x, mask)
        }
        _ => x,
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    Zeros,
    Ones,
    Normal(f64),
    Xavier,
}

pub(crate) struct Layout {
    entries: Vec<(String, Vec<usize>, Init)>,
}

impl Layout {
    fn push(&mut self, name: impl Into<String>, shape: &[usize], init: Init) {
        self.entries.push((name.into(), shape.to_vec(), init));
    }

    pub(crate) fn linear(&mut self, w: &str, b: &str, fan_in: usize, fan_out: usize) {
        self.push(w, &[fan_in, fan_out], Init::Xavier);
        self.push(b, &[1, fan_out], Init::Zeros);
    }

    /// Weight without a bias.
    pub(crate) fn projection(&mut self, w: &str, fan_in: usize, fan_out: usize) {
        self.push(w, &[fan_in, fan_out], Init::Xavier);
    }

    pub(crate) fn layer_norm(&mut self, prefix: &str, d: usize) {
        self.push(format!("{prefix}.gain"), &[1, d], Init::Ones);
        self.push(format!("{prefix}.bias"), &[1, d], Init::Zeros);
    }

    pub(crate) fn embedding(&mut self, name: &str, rows: usize, cols: usize) {
        self.push(name, &[rows, cols], Init::Normal(0.1));
    }
}

fn init_tensor<T: Real>(shape: &[usize], init: Init, rng: &mut RngStream) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = match init {
        Init::Zeros => vec![T::zero(); n],
        Init::Ones => vec![T::one(); n],
        Init::Normal(std) => (0..n).map(|_| T::lit(rng.normal() * std)).collect(),
        Init::Xavier => {
            let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            (0..n).map(|_| T::lit((2.0 * rng.uniform() - 1.0) * limit)).collect()
        }
    };
    Tensor::from_vec(shape, data).expect("layout shape")
}

pub(crate) struct LinearIds {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearIds {
    pub(crate) fn lookup(store: &ParamStore<impl Real>, w: &str, b: &str) -> Self {
        LinearIds {
            w: store.id(w).expect("layout param"),
            b: store.id(b).expect("layout param"),
        }
    }

    pub(crate) fn apply<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let (w, b) = (g.param(self.w), g.param(self.b));
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

pub(crate) struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl NormIds {
    pub(crate) fn lookup(store: &ParamStore<impl Real>, prefix: &str) -> Self {
        NormIds {
            gain: store.id(&format!("{prefix}.gain")).expect("layout param"),
            bias: store.id(&format!("{prefix}.bias")).expect("layout param"),
        }
    }

    pub(crate) fn apply<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Var {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias, T::lit(LAYER_NORM_EPS))
    }
}

enum EncoderIds {
    Transformer(transformer::TransformerIds),
    Cnn(cnn::CnnIds),
}

struct ModelIds {
    encoder: EncoderIds,
    noise_ln: NormIds,
    shared: LinearIds,
    heads: PerAspect<LinearIds>,
}

fn layout(config: &ModelConfig) -> Layout {
    let mut l = Layout { entries: Vec::new() };
    match &config.encoder {
        EncoderArch::Transformer(c) => transformer::layout(c, &mut l),
        EncoderArch::Cnn(c) => cnn::layout(c, &mut l),
    }
    let d = config.encoder.d_model();
    l.layer_norm("noise.ln", d);
    l.linear("shared.w", "shared.b", d, config.d_hidden);
    for a in Aspect::ALL {
        let p = format!("head.{}", a.short());
        l.linear(&format!("{p}.w"), &format!("{p}.b"), config.d_hidden, config.head_sizes[a]);
    }
    l
}

/// Per-aspect probability vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub probs: PerAspect<Vec<f64>>,
}

/// Encoder, post-noise layer norm, shared hidden layer and three heads.
pub struct MultiTaskModel<T: Real> {
    config: ModelConfig,
    params: ParamStore<T>,
    ids: ModelIds,
}

impl<T: Real> Clone for MultiTaskModel<T> {
    fn clone(&self) -> Self {
        MultiTaskModel::from_params(self.config.clone(), self.params.clone()).expect("valid model")
    }
}

impl<T: Real> std::fmt::Debug for MultiTaskModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiTaskModel")
            .field("config", &self.config)
            .field("parameters", &self.params.num_values())
            .finish()
    }
}

impl<T: Real> MultiTaskModel<T> {
    /// Freshly initialized parameters; `seed` fully determines the values.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::derive(seed, "init", 0);
        let mut params = ParamStore::new();
        for (name, shape, init) in layout(&config).entries {
            let t = init_tensor(&shape, init, &mut rng);
            params.insert(name, t);
        }
        MultiTaskModel::from_params(config, params)
    }

    /// Wraps an existing store; names and shapes must match the layout exactly.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config).entries;
        if expected.len() != params.len() {
            return Err(Error::Shape(format!(
                "model expects {} tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape, _), (got_name, got)) in expected.iter().zip(params.iter()) {
            if name != got_name || shape.as_slice() != got.shape() {
                return Err(Error::Shape(format!(
                    "expected {name} {shape:?}, found {got_name} {:?}",
                    got.shape()
                )));
            }
        }
        let encoder = match &config.encoder {
            EncoderArch::Transformer(c) => EncoderIds::Transformer(transformer::TransformerIds::lookup(c, &params)),
            EncoderArch::Cnn(c) => EncoderIds::Cnn(cnn::CnnIds::lookup(c, &params)),
        };
        let ids = ModelIds {
            encoder,
            noise_ln: NormIds::lookup(&params, "noise.ln"),
            shared: LinearIds::lookup(&params, "shared.w", "shared.b"),
            heads: PerAspect::from_fn(|a| {
                let p = format!("head.{}", a.short());
                LinearIds::lookup(&params, &format!("{p}.w"), &format!("{p}.b"))
            }),
        };
        Ok(MultiTaskModel { config, params, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    /// Copies every `encoder.*` tensor from `source`, leaving the rest intact.
    pub fn load_encoder(&mut self, source_arch: &EncoderArch, source: &ParamStore<T>) -> Result<()> {
        let diffs = self.config.encoder.differences(source_arch);
        if !diffs.is_empty() {
            return Err(Error::EncoderMismatch(diffs));
        }
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.name(id).to_string();
            if !name.starts_with("encoder.") {
                continue;
            }
            let src = source
                .by_name(&name)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor {name}")))?;
            if src.shape() != self.params.get(id).shape() {
                return Err(Error::CorruptCheckpoint(format!("tensor {name} has wrong shape")));
            }
            *self.params.get_mut(id) = src.clone();
        }
        Ok(())
    }

    /// Encoder output at the CLS position, shape `[1, d_model]`.
    pub fn encode_var(&self, g: &mut Graph<T>, tokens: &TokenSequence, mode: &mut Mode) -> Result<Var> {
        let max_len = self.config.encoder.max_len();
        if tokens.is_empty() || tokens.len() > max_len {
            return Err(Error::Shape(format!(
                "sequence length {} outside 1..={max_len}",
                tokens.len()
            )));
        }
        let vocab = self.config.encoder.vocab_size();
        if let Some(bad) = tokens.ids.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::Shape(format!("token id {bad} >= vocabulary size {vocab}")));
        }
        let ids: Vec<usize> = tokens.ids.iter().map(|&t| t as usize).collect();
        Ok(match &self.ids.encoder {
            EncoderIds::Transformer(t) => t.forward(g, &ids, mode),
            EncoderIds::Cnn(c) => c.forward(g, &ids, mode).1,
        })
    }

    /// Optional noise on the encoder vector followed by the post-noise layer
    /// norm. `noise_rho` is only honored in training mode.
    pub fn represent_var(
        &self,
        g: &mut Graph<T>,
        h: Var,
        noise_rho: Option<f64>,
        noise_stream: Option<&mut RngStream>,
        mode: &Mode,
    ) -> Result<Var> {
        let mut x = h;
        if let (true, Some(rho), Some(stream)) = (mode.is_train(), noise_rho, noise_stream) {
            if rho > 0.0 {
                let norm = g.value(h).data().iter().fold(0.0, |a, v| a + v.as_f64() * v.as_f64());
                if norm == 0.0 {
                    return Err(Error::NonFinite("noise requested on a zero-norm representation".into()));
                }
                let dir = noise_direction::<T>(g.value(h).len(), stream);
                x = g.scaled_noise(h, dir, T::lit(rho));
            }
        }
        Ok(self.ids.noise_ln.apply(g, x))
    }

    /// Shared hidden layer (ReLU, dropout) then the three head logits.
    pub fn head_logits(&self, g: &mut Graph<T>, h: Var, mode: &mut Mode) -> PerAspect<Var> {
        let hidden = self.ids.shared.apply(g, h);
        let hidden = g.relu(hidden);
        let hidden = apply_dropout(g, hidden, mode);
        PerAspect::from_fn(|a| self.ids.heads[a].apply(g, hidden))
    }

    /// Mean binary cross-entropy of one instance over its unmasked heads.
    /// `noise` is `(rho, stream)` and only takes effect in training mode.
    pub fn loss_var(
        &self,
        g: &mut Graph<T>,
        tokens: &TokenSequence,
        targets: &PerAspect<Vec<T>>,
        head_mask: &PerAspect<bool>,
        mode: &mut Mode,
        noise: Option<(f64, &mut RngStream)>,
    ) -> Result<Var> {
        let h = self.encode_var(g, tokens, mode)?;
        let (rho, stream) = match noise {
            Some((rho, s)) => (Some(rho), Some(s)),
            None => (None, None),
        };
        let r = self.represent_var(g, h, rho, stream, mode)?;
        let logits = self.head_logits(g, r, mode);
        let mut parts = Vec::with_capacity(3);
        let mut count = 0usize;
        for a in Aspect::ALL {
            if head_mask[a] {
                continue;
            }
            if targets[a].len() != self.config.head_sizes[a] {
                return Err(Error::Shape(format!(
                    "{a}: {} targets for a head of width {}",
                    targets[a].len(),
                    self.config.head_sizes[a]
                )));
            }
            parts.push(g.bce_with_logits(logits[a], targets[a].clone()));
            count += targets[a].len();
        }
        if parts.is_empty() {
            return Err(Error::Shape("every head is masked".into()));
        }
        let total = g.sum(&parts);
        Ok(g.scale(total, T::lit(1.0 / count as f64)))
    }

    /// Evaluation-mode encoder vector.
    pub fn encode(&self, tokens: &TokenSequence) -> Result<Vec<T>> {
        let mut g = Graph::new(&self.params);
        let h = self.encode_var(&mut g, tokens, &mut Mode::Eval)?;
        Ok(g.value(h).data().to_vec())
    }

    /// Head probabilities for an externally supplied representation `h`
    /// (post-noise-norm input to the shared layer).
    pub fn forward_heads(&self, h: &[T], mode: &mut Mode) -> Result<Predictions> {
        let d = self.config.encoder.d_model();
        if h.len() != d {
            return Err(Error::Shape(format!("representation width {} != d_model {d}", h.len())));
        }
        if let Mode::Train { dropout, .. } = mode {
            check_dropout_rate(*dropout)?;
        }
        let mut g = Graph::new(&self.params);
        let hv = g.constant(Tensor::row_vector(h.to_vec()));
        let logits = self.head_logits(&mut g, hv, mode);
        Ok(probabilities(&mut g, &logits))
    }

    /// Evaluation-mode probabilities for one token sequence.
    pub fn predict_probs(&self, tokens: &TokenSequence) -> Result<Predictions> {
        let mut g = Graph::new(&self.params);
        let mut mode = Mode::Eval;
        let h = self.encode_var(&mut g, tokens, &mut mode)?;
        let r = self.represent_var(&mut g, h, None, None, &mode)?;
        let logits = self.head_logits(&mut g, r, &mut mode);
        Ok(probabilities(&mut g, &logits))
    }

    pub fn noise_layer_norm(&self) -> LayerNormParams<T> {
        LayerNormParams {
            gain: self.params.get(self.ids.noise_ln.gain).data().to_vec(),
            bias: self.params.get(self.ids.noise_ln.bias).data().to_vec(),
            eps: T::lit(LAYER_NORM_EPS),
        }
    }

    #[cfg(test)]
    pub(crate) fn cnn_pooled(&self, tokens: &TokenSequence) -> Vec<T> {
        let EncoderIds::Cnn(c) = &self.ids.encoder else {
            panic!("not a CNN model")
        };
        let mut g = Graph::new(&self.params);
        let ids: Vec<usize> = tokens.ids.iter().map(|&t| t as usize).collect();
        let pooled = c.forward(&mut g, &ids, &mut Mode::Eval).0;
        g.value(pooled).data().to_vec()
    }
}

fn probabilities<T: Real>(g: &mut Graph<T>, logits: &PerAspect<Var>) -> Predictions {
    Predictions {
        probs: logits.map(|_, &v| {
            let p = g.sigmoid(v);
            g.value(p).data().iter().map(|x| x.as_f64()).collect()
        }),
    }
}

/// Mean clamped binary cross-entropy over every unmasked `(aspect, label)`
/// position. `head_mask[a] == true` excludes aspect `a`.
pub fn bce_loss(
    pred: &Predictions,
    targets: &PerAspect<Vec<f64>>,
    head_mask: &PerAspect<bool>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for a in Aspect::ALL {
        let (p, t) = (&pred.probs[a], &targets[a]);
        if p.len() != t.len() {
            return Err(Error::Shape(format!(
                "{a}: {} probabilities vs {} targets",
                p.len(),
                t.len()
            )));
        }
        if head_mask[a] {
            continue;
        }
        for (&p, &t) in p.iter().zip(t) {
            let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Shape("every head is masked".into()));
    }
    Ok(total / count as f64)
}

/// Head slots whose probability is at least `threshold`.
pub fn predict(pred: &Predictions, threshold: f64) -> PerAspect<BTreeSet<usize>> {
    pred.probs.map(|_, p| {
        p.iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold)
            .map(|(i, _)| i)
            .collect()
    })
}

/// Thresholds applied per aspect.
pub fn predict_per_aspect(pred: &Predictions, thresholds: &PerAspect<f64>) -> PerAspect<BTreeSet<usize>> {
    PerAspect::from_fn(|a| {
        pred.probs[a]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= thresholds[a])
            .map(|(i, _)| i)
            .collect()
    })
}
