use serde::{Deserialize, Serialize};

use super::{apply_dropout, Layout, LinearIds, Mode};
use crate::corpus::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::neural::{Graph, ParamId, ParamStore, Real, Var};

/// Baseline encoder: parallel convolutions over token embeddings, each
/// followed by ReLU and max-pooling over time, concatenated, then
/// dropout → dense → ReLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub embed_dim: usize,
    pub filter_sizes: Vec<usize>,
    pub filters_per_size: usize,
    /// Width of the dense output (the representation width).
    pub d_model: usize,
}

impl CnnConfig {
    pub fn desk(vocab_size: usize) -> Self {
        CnnConfig {
            vocab_size,
            max_len: DEFAULT_MAX_LEN,
            embed_dim: 64,
            filter_sizes: vec![1, 3, 5],
            filters_per_size: 32,
            d_model: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.d_model == 0 {
            return Err(Error::Config("CNN dimensions must be positive".into()));
        }
        if self.filters_per_size == 0 {
            return Err(Error::Config("filters_per_size must be at least 1".into()));
        }
        if self.filter_sizes.is_empty() || self.filter_sizes.contains(&0) {
            return Err(Error::Config("filter sizes must be non-empty and positive".into()));
        }
        if self.max_len < 2 {
            return Err(Error::Config(format!("max_len must be at least 2, got {}", self.max_len)));
        }
        Ok(())
    }

    pub fn pooled_width(&self) -> usize {
        self.filter_sizes.len() * self.filters_per_size
    }
}

pub(super) fn layout(c: &CnnConfig, l: &mut Layout) {
    l.embedding("encoder.tok_emb", c.vocab_size, c.embed_dim);
    for &k in &c.filter_sizes {
        l.linear(
            &format!("encoder.conv{k}.w"),
            &format!("encoder.conv{k}.b"),
            k * c.embed_dim,
            c.filters_per_size,
        );
    }
    l.linear("encoder.dense.w", "encoder.dense.b", c.pooled_width(), c.d_model);
}

pub(super) struct CnnIds {
    tok_emb: ParamId,
    convs: Vec<(usize, LinearIds)>,
    dense: LinearIds,
}

impl CnnIds {
    pub(super) fn lookup<T: Real>(c: &CnnConfig, s: &ParamStore<T>) -> Self {
        CnnIds {
            tok_emb: s.id("encoder.tok_emb").expect("layout param"),
            convs: c
                .filter_sizes
                .iter()
                .map(|&k| {
                    (k, LinearIds::lookup(s, &format!("encoder.conv{k}.w"), &format!("encoder.conv{k}.b")))
                })
                .collect(),
            dense: LinearIds::lookup(s, "encoder.dense.w", "encoder.dense.b"),
        }
    }

    /// Returns `(pooled concatenation, representation)`. Sequences shorter
    /// than the widest filter are zero-padded at the end.
    pub(super) fn forward<T: Real>(&self, g: &mut Graph<T>, ids: &[usize], mode: &mut Mode) -> (Var, Var) {
        let widest = self.convs.iter().map(|(k, _)| *k).max().unwrap_or(1);
        let table = g.param(self.tok_emb);
        let emb = g.gather(table, ids);
        let emb = g.pad_rows(emb, widest);
        let pooled: Vec<Var> = self
            .convs
            .iter()
            .map(|(k, lin)| {
                let windows = g.unfold(emb, *k);
                let maps = lin.apply(g, windows);
                let maps = g.relu(maps);
                g.max_rows(maps)
            })
            .collect();
        let cat = g.concat_cols(&pooled);
        let dropped = apply_dropout(g, cat, mode);
        let dense = self.dense.apply(g, dropped);
        (cat, g.relu(dense))
    }
}
