//! Fine-tuning with the mixed real/artificial minibatch schedule, early
//! stopping on nested-validation average micro-F1, threshold tuning, the
//! dropout sweep, the noise-fraction sweep and surrogate pretraining.

mod pretrain;
mod schedule;
mod sweep;

pub use pretrain::{
    load_surrogate, parse_surrogate, pretrain, PretrainConfig, PretrainOutcome, SurrogateCorpus, SurrogateDoc,
};
pub use schedule::{artificial_phase_epochs, epoch_batches, make_batch_schedule, Batch, BatchKind, BatchSchedule};
pub use sweep::{noise_sweep, sweep, CurvePoint, SweepOutcome, SweepRow, DEFAULT_DROPOUT_GRID};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{Provenance, TrainingInstance};
use crate::corpus::{Aspect, PerAspect};
use crate::error::{Error, Result};
use crate::metrics::{report_with_sizes, EvalReport, LabelSets};
use crate::model::{predict_per_aspect, ModelConfig, Mode, MultiTaskModel, NoiseConfig, NoiseScope, Predictions};
use crate::neural::{check_dropout_rate, Adam, AdamConfig, Gradients, Graph, Real, RngStream};

/// Flat training configuration; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub artificial_phase_fraction: f64,
    pub p_artificial_batch: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; absent means no clipping.
    pub grad_clip: Option<f64>,
    pub patience: usize,
    pub seed: u64,
    pub dropout: f64,
    pub noise: bool,
    pub noise_rho: f64,
    pub noise_scope: NoiseScope,
    /// Exclude the heads that do not own an artificial instance's label
    /// from its loss.
    pub mask_non_owning_heads: bool,
    /// Threshold used for the per-epoch validation score.
    pub val_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            batch_size: 16,
            max_epochs: 150,
            artificial_phase_fraction: 0.5,
            p_artificial_batch: 0.5,
            lr: adam.lr,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            grad_clip: None,
            patience: 10,
            seed: 0,
            dropout: 0.1,
            noise: false,
            noise_rho: NoiseConfig::default().rho,
            noise_scope: NoiseScope::default(),
            mask_non_owning_heads: false,
            val_threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let unit = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        unit("artificial_phase_fraction", self.artificial_phase_fraction)?;
        unit("p_artificial_batch", self.p_artificial_batch)?;
        unit("val_threshold", self.val_threshold)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        unit("adam_beta1", self.adam_beta1)?;
        unit("adam_beta2", self.adam_beta2)?;
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        check_dropout_rate(self.dropout)?;
        self.noise_config().map_or(Ok(()), |n| n.validate())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            clip_norm: self.grad_clip,
        }
    }

    pub fn noise_config(&self) -> Option<NoiseConfig> {
        self.noise.then_some(NoiseConfig {
            rho: self.noise_rho,
            apply_to: self.noise_scope,
        })
    }
}

/// Real training documents, nested-validation documents and artificial
/// instances for one run.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub train: &'a [TrainingInstance],
    pub val: &'a [TrainingInstance],
    pub artificial: &'a [TrainingInstance],
}

impl TrainingData<'_> {
    fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Validation("no real training instances".into()));
        }
        if self.val.is_empty() {
            return Err(Error::Validation("no nested-validation instances".into()));
        }
        if let Some(i) = self.artificial.iter().position(|i| !i.is_artificial()) {
            return Err(Error::Validation(format!("artificial pool entry {i} is a real instance")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean minibatch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Nested-validation average micro-F1 per epoch.
    pub val_avg_micro_f1: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn best_score(&self) -> f64 {
        self.val_avg_micro_f1[self.best_epoch - 1]
    }

    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

fn head_mask(inst: &TrainingInstance, cfg: &TrainConfig) -> PerAspect<bool> {
    match (&inst.provenance, cfg.mask_non_owning_heads) {
        (Provenance::Artificial { aspect, .. }, true) => PerAspect::from_fn(|a| a != *aspect),
        _ => PerAspect::default(),
    }
}

/// Adds one instance's loss gradient into `acc`; returns the loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_instance<T: Real>(
    model: &MultiTaskModel<T>,
    inst_tokens: &crate::corpus::TokenSequence,
    targets: &PerAspect<Vec<T>>,
    mask: &PerAspect<bool>,
    dropout: f64,
    noise_rho: Option<f64>,
    stream: &RngStream,
    acc: &mut Gradients<T>,
) -> Result<f64> {
    let mut g = Graph::new(model.params());
    let mut drop_stream = stream.child("dropout", 0);
    let mut noise_stream = stream.child("noise", 0);
    let mut mode = Mode::Train {
        dropout,
        stream: &mut drop_stream,
    };
    let noise = noise_rho.map(|rho| (rho, &mut noise_stream));
    let loss = model.loss_var(&mut g, inst_tokens, targets, mask, &mut mode, noise)?;
    let value = g.scalar(loss).as_f64();
    if value.is_finite() {
        acc.accumulate(&g.backward(loss));
    }
    Ok(value)
}

/// Trains a freshly initialized model (seeded by `cfg.seed`).
pub fn train<T: Real>(
    model_cfg: &ModelConfig,
    data: TrainingData,
    cfg: &TrainConfig,
) -> Result<(MultiTaskModel<T>, History)> {
    let model = MultiTaskModel::new(model_cfg.clone(), cfg.seed)?;
    train_from(model, data, cfg)
}

/// Trains starting from `model` and returns the parameters of the epoch with
/// the best nested-validation score.
pub fn train_from<T: Real>(
    mut model: MultiTaskModel<T>,
    data: TrainingData,
    cfg: &TrainConfig,
) -> Result<(MultiTaskModel<T>, History)> {
    cfg.validate()?;
    data.validate()?;
    let sizes = model.config().head_sizes.clone();
    let noise = cfg.noise_config();
    let real_ids: Vec<usize> = (0..data.train.len()).collect();
    let art_ids: Vec<usize> = (0..data.artificial.len()).collect();
    let schedule_stream = RngStream::derive(cfg.seed, "schedule", 0);
    let train_stream = RngStream::derive(cfg.seed, "train", 0);
    let mut adam = Adam::new(cfg.adam(), model.params());
    let thresholds = PerAspect::from_fn(|_| cfg.val_threshold);

    let mut history = History::default();
    let mut best = model.params().clone();
    let mut best_score = f64::NEG_INFINITY;
    for epoch in 0..cfg.max_epochs {
        let batches = epoch_batches(epoch, cfg.max_epochs, &real_ids, &art_ids, cfg, &schedule_stream)?;
        let epoch_stream = train_stream.child("epoch", epoch as u64);
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let batch_stream = epoch_stream.child("batch", b as u64);
            let pool = match batch.kind {
                BatchKind::AllReal => data.train,
                BatchKind::AllArtificial => data.artificial,
            };
            let mut acc = Gradients::zeros_like(model.params());
            let mut batch_loss = 0.0;
            for (k, &m) in batch.members.iter().enumerate() {
                let inst = &pool[m];
                let rho = noise.filter(|n| n.applies_to(inst.is_artificial())).map(|n| n.rho);
                let loss = accumulate_instance(
                    &model,
                    &inst.tokens,
                    &inst.multi_hot(&sizes),
                    &head_mask(inst, cfg),
                    cfg.dropout,
                    rho,
                    &batch_stream.child("member", k as u64),
                    &mut acc,
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: epoch + 1,
                        batch: b + 1,
                    });
                }
                batch_loss += loss;
            }
            let n = batch.members.len() as f64;
            acc.scale(T::lit(1.0 / n));
            adam.step(model.params_mut(), &mut acc);
            if !model.params().all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b + 1,
                });
            }
            loss_sum += batch_loss / n;
        }
        history.train_loss.push(loss_sum / batches.len() as f64);

        let probs = predict_probabilities(&model, data.val)?;
        let score = evaluate_probs(&probs, data.val, &thresholds, &sizes)?.avg_micro_f1;
        history.val_avg_micro_f1.push(score);
        if score > best_score {
            best_score = score;
            history.best_epoch = epoch + 1;
            best = model.params().clone();
        } else if epoch + 1 - history.best_epoch >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    let config = model.config().clone();
    Ok((MultiTaskModel::from_params(config, best)?, history))
}

/// Evaluation-mode probabilities for each instance, in order.
pub fn predict_probabilities<T: Real>(
    model: &MultiTaskModel<T>,
    instances: &[TrainingInstance],
) -> Result<Vec<Predictions>> {
    instances.par_iter().map(|i| model.predict_probs(&i.tokens)).collect()
}

fn key(i: usize) -> String {
    format!("{i:08}")
}

/// Gold slots per aspect, keyed by instance position.
pub fn gold_sets(instances: &[TrainingInstance]) -> PerAspect<LabelSets> {
    PerAspect::from_fn(|a| {
        instances
            .iter()
            .enumerate()
            .map(|(i, inst)| (key(i), inst.targets[a].clone()))
            .collect()
    })
}

pub fn predicted_sets(probs: &[Predictions], thresholds: &PerAspect<f64>) -> PerAspect<LabelSets> {
    let mut out = PerAspect::<LabelSets>::default();
    for (i, p) in probs.iter().enumerate() {
        let sets = predict_per_aspect(p, thresholds);
        for a in Aspect::ALL {
            out[a].insert(key(i), sets[a].clone());
        }
    }
    out
}

pub fn evaluate_probs(
    probs: &[Predictions],
    instances: &[TrainingInstance],
    thresholds: &PerAspect<f64>,
    sizes: &PerAspect<usize>,
) -> Result<EvalReport> {
    if probs.len() != instances.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} instances",
            probs.len(),
            instances.len()
        )));
    }
    report_with_sizes(&predicted_sets(probs, thresholds), &gold_sets(instances), sizes)
}

/// Metrics for `instances` at one global threshold.
pub fn evaluate<T: Real>(model: &MultiTaskModel<T>, instances: &[TrainingInstance], threshold: f64) -> Result<EvalReport> {
    let probs = predict_probabilities(model, instances)?;
    evaluate_probs(&probs, instances, &PerAspect::from_fn(|_| threshold), &model.config().head_sizes)
}

/// `{0, 1/9, …, 1}`.
pub fn threshold_grid() -> [f64; 10] {
    std::array::from_fn(|k| k as f64 / 9.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub avg_micro_f1: f64,
}

/// Grid point with the highest average micro-F1; ties go to the smaller
/// threshold.
pub fn tune_threshold_probs(
    probs: &[Predictions],
    instances: &[TrainingInstance],
    sizes: &PerAspect<usize>,
) -> Result<ThresholdChoice> {
    let mut best: Option<ThresholdChoice> = None;
    for t in threshold_grid() {
        let score = evaluate_probs(probs, instances, &PerAspect::from_fn(|_| t), sizes)?.avg_micro_f1;
        if best.is_none_or(|b| score > b.avg_micro_f1) {
            best = Some(ThresholdChoice {
                threshold: t,
                avg_micro_f1: score,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

pub fn tune_threshold<T: Real>(model: &MultiTaskModel<T>, val: &[TrainingInstance]) -> Result<ThresholdChoice> {
    let probs = predict_probabilities(model, val)?;
    tune_threshold_probs(&probs, val, &model.config().head_sizes)
}

/// Independent per-aspect thresholds, each maximizing that aspect's micro-F1.
pub fn tune_thresholds_per_aspect(
    probs: &[Predictions],
    instances: &[TrainingInstance],
    sizes: &PerAspect<usize>,
) -> Result<PerAspect<f64>> {
    let mut best = PerAspect::from_fn(|_| (0.0, f64::NEG_INFINITY));
    for t in threshold_grid() {
        let report = evaluate_probs(probs, instances, &PerAspect::from_fn(|_| t), sizes)?;
        for a in Aspect::ALL {
            if report.aspects[a].micro_f1 > best[a].1 {
                best[a] = (t, report.aspects[a].micro_f1);
            }
        }
    }
    Ok(best.map(|_, &(t, _)| t))
}

#[cfg(test)]
mod tests;
