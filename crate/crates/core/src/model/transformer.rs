use serde::{Deserialize, Serialize};

use super::{apply_dropout, Layout, LinearIds, Mode, NormIds};
use crate::corpus::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::neural::{Graph, ParamId, ParamStore, Real, Var};

/// Post-norm transformer encoder with learned positional embeddings. The
/// position-wise sublayer is a two-layer ReLU feed-forward network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub d_ff: usize,
}

impl EncoderConfig {
    /// Desk-scale defaults: d 64, 2 blocks, 4 heads, feed-forward 128.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            max_len: DEFAULT_MAX_LEN,
            d_model: 64,
            n_blocks: 2,
            n_heads: 4,
            d_ff: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.d_ff == 0 || self.n_heads == 0 {
            return bad("encoder dimensions must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len < 2 {
            return bad(format!("max_len must be at least 2, got {}", self.max_len));
        }
        Ok(())
    }
}

pub(super) fn layout(c: &EncoderConfig, l: &mut Layout) {
    l.embedding("encoder.tok_emb", c.vocab_size, c.d_model);
    l.embedding("encoder.pos_emb", c.max_len, c.d_model);
    for i in 0..c.n_blocks {
        let p = format!("encoder.block{i}");
        for m in ["q", "k", "v", "o"] {
            if m == "k" {
                // A key bias shifts every score in a row equally, so softmax ignores it.
                l.projection(&format!("{p}.attn.k"), c.d_model, c.d_model);
            } else {
                l.linear(&format!("{p}.attn.{m}"), &format!("{p}.attn.{m}_b"), c.d_model, c.d_model);
            }
        }
        l.layer_norm(&format!("{p}.ln1"), c.d_model);
        l.linear(&format!("{p}.ffn.w1"), &format!("{p}.ffn.b1"), c.d_model, c.d_ff);
        l.linear(&format!("{p}.ffn.w2"), &format!("{p}.ffn.b2"), c.d_ff, c.d_model);
        l.layer_norm(&format!("{p}.ln2"), c.d_model);
    }
}

struct BlockIds {
    q: LinearIds,
    k: ParamId,
    v: LinearIds,
    o: LinearIds,
    ln1: NormIds,
    ffn1: LinearIds,
    ffn2: LinearIds,
    ln2: NormIds,
}

pub(super) struct TransformerIds {
    tok_emb: ParamId,
    pos_emb: ParamId,
    blocks: Vec<BlockIds>,
    n_heads: usize,
}

impl TransformerIds {
    pub(super) fn lookup<T: Real>(c: &EncoderConfig, s: &ParamStore<T>) -> Self {
        let blocks = (0..c.n_blocks)
            .map(|i| {
                let p = format!("encoder.block{i}");
                let lin = |m: &str, b: &str| LinearIds::lookup(s, &format!("{p}.{m}"), &format!("{p}.{b}"));
                BlockIds {
                    q: lin("attn.q", "attn.q_b"),
                    k: s.id(&format!("{p}.attn.k")).expect("layout param"),
                    v: lin("attn.v", "attn.v_b"),
                    o: lin("attn.o", "attn.o_b"),
                    ln1: NormIds::lookup(s, &format!("{p}.ln1")),
                    ffn1: lin("ffn.w1", "ffn.b1"),
                    ffn2: lin("ffn.w2", "ffn.b2"),
                    ln2: NormIds::lookup(s, &format!("{p}.ln2")),
                }
            })
            .collect();
        TransformerIds {
            tok_emb: s.id("encoder.tok_emb").expect("layout param"),
            pos_emb: s.id("encoder.pos_emb").expect("layout param"),
            blocks,
            n_heads: c.n_heads,
        }
    }

    /// Returns the CLS row of the final block, `[1, d_model]`.
    pub(super) fn forward<T: Real>(&self, g: &mut Graph<T>, ids: &[usize], mode: &mut Mode) -> Var {
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok_table = g.param(self.tok_emb);
        let pos_table = g.param(self.pos_emb);
        let tok = g.gather(tok_table, ids);
        let pos = g.gather(pos_table, &positions);
        let mut x = g.add(tok, pos);
        x = apply_dropout(g, x, mode);
        for block in &self.blocks {
            let attn = self.attention(g, block, x);
            let attn = apply_dropout(g, attn, mode);
            let res = g.add(x, attn);
            x = block.ln1.apply(g, res);

            let hidden = block.ffn1.apply(g, x);
            let hidden = g.relu(hidden);
            let ff = block.ffn2.apply(g, hidden);
            let ff = apply_dropout(g, ff, mode);
            let res = g.add(x, ff);
            x = block.ln2.apply(g, res);
        }
        g.slice_rows(x, 0, 1)
    }

    fn attention<T: Real>(&self, g: &mut Graph<T>, block: &BlockIds, x: Var) -> Var {
        let d = g.value(x).cols();
        let dk = d / self.n_heads;
        let q = block.q.apply(g, x);
        let k_w = g.param(block.k);
        let k = g.matmul(x, k_w);
        let v = block.v.apply(g, x);
        let scale = T::lit(1.0 / (dk as f64).sqrt());
        let heads: Vec<Var> = (0..self.n_heads)
            .map(|h| {
                let qh = g.slice_cols(q, h * dk, dk);
                let kh = g.slice_cols(k, h * dk, dk);
                let vh = g.slice_cols(v, h * dk, dk);
                let scores = g.matmul_t(qh, kh);
                let scores = g.scale(scores, scale);
                let weights = g.softmax_rows(scores);
                g.matmul(weights, vh)
            })
            .collect();
        let joined = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        block.o.apply(g, joined)
    }
}
