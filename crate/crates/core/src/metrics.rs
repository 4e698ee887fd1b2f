//! Micro and macro precision, recall and F1 per aspect, and the cross-aspect
//! averages used for model selection.
//!
//! Every ratio with a zero denominator is 0. Macro scores average over the
//! full aspect vocabulary, so labels never seen in gold or predictions
//! contribute 0.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Aspect, LabelVocabulary, PerAspect};
use crate::error::{Error, Result};

/// Predicted or gold label slots keyed by document id.
pub type LabelSets = BTreeMap<String, BTreeSet<usize>>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn prf(&self) -> Prf {
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        Prf { p, r, f1: f1_from_pr(p, r) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_pr(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_ids(preds: &LabelSets, golds: &LabelSets) -> Result<()> {
    if preds.len() != golds.len() || preds.keys().zip(golds.keys()).any(|(a, b)| a != b) {
        let missing: Vec<&String> = golds.keys().filter(|k| !preds.contains_key(*k)).collect();
        let extra: Vec<&String> = preds.keys().filter(|k| !golds.contains_key(*k)).collect();
        return Err(Error::Validation(format!(
            "prediction and gold document ids differ (missing predictions: {missing:?}, unknown: {extra:?})"
        )));
    }
    Ok(())
}

/// Counts pooled over every `(document, label)` pair.
pub fn micro_counts(preds: &LabelSets, golds: &LabelSets) -> Result<ConfusionCounts> {
    check_ids(preds, golds)?;
    let mut c = ConfusionCounts::default();
    for (id, gold) in golds {
        let pred = &preds[id];
        let tp = pred.intersection(gold).count() as u64;
        c.tp += tp;
        c.fp += pred.len() as u64 - tp;
        c.fn_ += gold.len() as u64 - tp;
    }
    Ok(c)
}

pub fn micro_prf(preds: &LabelSets, golds: &LabelSets) -> Result<Prf> {
    Ok(micro_counts(preds, golds)?.prf())
}

/// Per-label counts for labels `0..n_labels`.
pub fn label_counts(preds: &LabelSets, golds: &LabelSets, n_labels: usize) -> Result<Vec<ConfusionCounts>> {
    check_ids(preds, golds)?;
    let mut counts = vec![ConfusionCounts::default(); n_labels];
    for (id, gold) in golds {
        let pred = &preds[id];
        for (&l, kind) in pred.iter().map(|l| (l, "predicted")).chain(gold.iter().map(|l| (l, "gold"))) {
            if l >= n_labels {
                return Err(Error::Validation(format!(
                    "document {id:?}: {kind} label {l} outside a vocabulary of {n_labels}"
                )));
            }
        }
        for &l in pred {
            if gold.contains(&l) {
                counts[l].tp += 1;
            } else {
                counts[l].fp += 1;
            }
        }
        for &l in gold.difference(pred) {
            counts[l].fn_ += 1;
        }
    }
    Ok(counts)
}

/// Unweighted mean of per-label P, R and F1 over all `n_labels` labels.
pub fn macro_prf(preds: &LabelSets, golds: &LabelSets, n_labels: usize) -> Result<Prf> {
    let counts = label_counts(preds, golds, n_labels)?;
    if n_labels == 0 {
        return Ok(Prf::default());
    }
    let mut sum = Prf::default();
    for c in &counts {
        let m = c.prf();
        sum.p += m.p;
        sum.r += m.r;
        sum.f1 += m.f1;
    }
    let n = n_labels as f64;
    Ok(Prf {
        p: sum.p / n,
        r: sum.r / n,
        f1: sum.f1 / n,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AspectMetrics {
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub micro_p: f64,
    pub micro_r: f64,
    pub micro_f1: f64,
}

impl AspectMetrics {
    pub fn from_prf(macro_: Prf, micro: Prf) -> Self {
        AspectMetrics {
            macro_p: macro_.p,
            macro_r: macro_.r,
            macro_f1: macro_.f1,
            micro_p: micro.p,
            micro_r: micro.r,
            micro_f1: micro.f1,
        }
    }

    /// The six values in column order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.macro_p,
            self.macro_r,
            self.macro_f1,
            self.micro_p,
            self.micro_r,
            self.micro_f1,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aspects: PerAspect<AspectMetrics>,
    pub avg_micro_f1: f64,
    pub avg_macro_f1: f64,
}

impl EvalReport {
    pub fn new(aspects: PerAspect<AspectMetrics>) -> Self {
        EvalReport {
            avg_micro_f1: average_micro_f1(&aspects),
            avg_macro_f1: average_macro_f1(&aspects),
            aspects,
        }
    }
}

fn mean3(v: PerAspect<f64>) -> f64 {
    (v.population + v.intervention + v.outcome) / 3.0
}

/// Mean of the three per-aspect micro-F1 values (the model-selection score).
pub fn average_micro_f1(aspects: &PerAspect<AspectMetrics>) -> f64 {
    mean3(aspects.map(|_, m| m.micro_f1))
}

pub fn average_macro_f1(aspects: &PerAspect<AspectMetrics>) -> f64 {
    mean3(aspects.map(|_, m| m.macro_f1))
}

/// Micro and macro scores for each aspect; head widths come from `vocab`.
pub fn aspect_report(
    preds: &PerAspect<LabelSets>,
    golds: &PerAspect<LabelSets>,
    vocab: &LabelVocabulary,
) -> Result<EvalReport> {
    report_with_sizes(preds, golds, &vocab.sizes())
}

pub fn report_with_sizes(
    preds: &PerAspect<LabelSets>,
    golds: &PerAspect<LabelSets>,
    sizes: &PerAspect<usize>,
) -> Result<EvalReport> {
    let mut aspects = PerAspect::<AspectMetrics>::default();
    for a in Aspect::ALL {
        let tag = |e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("{a}: {m}")),
            other => other,
        };
        let micro = micro_prf(&preds[a], &golds[a]).map_err(tag)?;
        let macro_ = macro_prf(&preds[a], &golds[a], sizes[a]).map_err(tag)?;
        aspects[a] = AspectMetrics::from_prf(macro_, micro);
    }
    Ok(EvalReport::new(aspects))
}
