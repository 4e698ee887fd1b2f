use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::neural::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BatchKind {
    AllReal,
    AllArtificial,
}

/// One minibatch; `members` index into the pool named by `kind`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub kind: BatchKind,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub epochs: Vec<Vec<Batch>>,
}

/// Number of leading epochs in which artificial batches may be drawn.
pub fn artificial_phase_epochs(n_epochs: usize, fraction: f64) -> usize {
    ((fraction * n_epochs as f64).ceil() as usize).min(n_epochs)
}

/// Epoch-local shuffled pool consumed without replacement; reshuffled when
/// exhausted.
struct Pool<'a> {
    ids: &'a [usize],
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> Pool<'a> {
    fn new(ids: &'a [usize], stream: &mut RngStream) -> Self {
        let mut order = ids.to_vec();
        stream.shuffle(&mut order);
        Pool { ids, order, cursor: 0 }
    }

    fn take(&mut self, n: usize, stream: &mut RngStream) -> Vec<usize> {
        if self.cursor == self.order.len() {
            self.order = self.ids.to_vec();
            stream.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let end = (self.cursor + n).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }
}

/// The minibatches of epoch `epoch` (0-based). Each epoch has
/// `⌈|real| / batch_size⌉` batches; during the artificial phase each batch is
/// all-artificial with probability `p_artificial_batch`.
pub fn epoch_batches(
    epoch: usize,
    n_epochs: usize,
    real_ids: &[usize],
    artificial_ids: &[usize],
    cfg: &TrainConfig,
    stream: &RngStream,
) -> Result<Vec<Batch>> {
    if real_ids.is_empty() {
        return Err(Error::Validation("the real instance pool is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut s = stream.child("epoch", epoch as u64);
    let mixed = epoch < artificial_phase_epochs(n_epochs, cfg.artificial_phase_fraction) && !artificial_ids.is_empty();
    let mut real = Pool::new(real_ids, &mut s);
    let mut art = Pool::new(artificial_ids, &mut s);
    let n_batches = real_ids.len().div_ceil(cfg.batch_size);
    let mut out = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let artificial = mixed && s.bernoulli(cfg.p_artificial_batch);
        out.push(if artificial {
            Batch {
                kind: BatchKind::AllArtificial,
                members: art.take(cfg.batch_size, &mut s),
            }
        } else {
            Batch {
                kind: BatchKind::AllReal,
                members: real.take(cfg.batch_size, &mut s),
            }
        });
    }
    Ok(out)
}

pub fn make_batch_schedule(
    n_epochs: usize,
    real_ids: &[usize],
    artificial_ids: &[usize],
    cfg: &TrainConfig,
    stream: &RngStream,
) -> Result<BatchSchedule> {
    let epochs = (0..n_epochs)
        .map(|e| epoch_batches(e, n_epochs, real_ids, artificial_ids, cfg, stream))
        .collect::<Result<_>>()?;
    Ok(BatchSchedule { epochs })
}
