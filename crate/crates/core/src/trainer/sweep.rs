use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_probabilities, train_from, tune_threshold_probs, History, TrainConfig, TrainingData};
use crate::augment::TrainingInstance;
use crate::corpus::PerAspect;
use crate::error::{Error, Result};
use crate::model::MultiTaskModel;
use crate::neural::Real;

/// `{0, 0.1, …, 0.9}`: ten equidistant rates, all valid dropout values.
pub const DEFAULT_DROPOUT_GRID: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dropout: f64,
    pub threshold: f64,
    pub val_avg_micro_f1: f64,
    pub val_avg_macro_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

pub struct SweepOutcome<T: Real> {
    /// Sorted by descending validation score; ties keep grid order.
    pub rows: Vec<SweepRow>,
    pub best_config: TrainConfig,
    pub best_model: MultiTaskModel<T>,
    pub best_threshold: f64,
    pub best_history: History,
}

/// Runs `f(0..n)` on a pool of `jobs` threads; results keep index order.
fn run_jobs<R, F>(jobs: usize, n: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// One training run per dropout rate, each followed by threshold tuning on
/// the nested validation set.
pub fn sweep<T: Real>(
    initial: &MultiTaskModel<T>,
    data: TrainingData,
    base: &TrainConfig,
    dropouts: &[f64],
    jobs: usize,
) -> Result<SweepOutcome<T>> {
    if dropouts.is_empty() {
        return Err(Error::Config("the dropout grid is empty".into()));
    }
    let runs = run_jobs(jobs, dropouts.len(), |i| {
        let cfg = TrainConfig {
            dropout: dropouts[i],
            ..base.clone()
        };
        let (model, history) = train_from(initial.clone(), data, &cfg)?;
        let probs = predict_probabilities(&model, data.val)?;
        let sizes = &model.config().head_sizes;
        let choice = tune_threshold_probs(&probs, data.val, sizes)?;
        let report = super::evaluate_probs(&probs, data.val, &PerAspect::from_fn(|_| choice.threshold), sizes)?;
        let row = SweepRow {
            dropout: dropouts[i],
            threshold: choice.threshold,
            val_avg_micro_f1: choice.avg_micro_f1,
            val_avg_macro_f1: report.avg_macro_f1,
            best_epoch: history.best_epoch,
            epochs_run: history.epochs_run(),
        };
        Ok((row, cfg, model, history))
    })?;
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| runs[b].0.val_avg_micro_f1.total_cmp(&runs[a].0.val_avg_micro_f1));
    let rows = order.iter().map(|&i| runs[i].0.clone()).collect();
    let (row, best_config, best_model, best_history) = runs.into_iter().nth(order[0]).expect("non-empty");
    Ok(SweepOutcome {
        rows,
        best_config,
        best_model,
        best_threshold: row.threshold,
        best_history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub threshold: f64,
    pub avg_micro_f1: f64,
    pub avg_macro_f1: f64,
}

/// Trains once per noise fraction with everything else fixed, tunes the
/// threshold on nested validation and scores `test`. Rows keep input order.
pub fn noise_sweep<T: Real>(
    initial: &MultiTaskModel<T>,
    data: TrainingData,
    test: &[TrainingInstance],
    base: &TrainConfig,
    fractions: &[f64],
    jobs: usize,
) -> Result<Vec<CurvePoint>> {
    if fractions.is_empty() {
        return Err(Error::Config("no noise fractions given".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f >= 0.0 && f.is_finite())) {
        return Err(Error::Config(format!("noise fractions must be finite and >= 0, got {f}")));
    }
    if test.is_empty() {
        return Err(Error::Validation("no test instances".into()));
    }
    run_jobs(jobs, fractions.len(), |i| {
        let cfg = TrainConfig {
            noise: true,
            noise_rho: fractions[i],
            ..base.clone()
        };
        let (model, _) = train_from(initial.clone(), data, &cfg)?;
        let choice = super::tune_threshold(&model, data.val)?;
        let report = super::evaluate(&model, test, choice.threshold)?;
        Ok(CurvePoint {
            fraction: fractions[i],
            threshold: choice.threshold,
            avg_micro_f1: report.avg_micro_f1,
            avg_macro_f1: report.avg_macro_f1,
        })
    })
}
