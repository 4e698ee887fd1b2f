use std::collections::BTreeSet;
use std::path::Path;

use super::*;
use crate::augment::{construct_instances, AugmentConfig, Strategy};
use crate::corpus::{Label, LabelVocabulary, Tokenizer};
use crate::model::{EncoderArch, EncoderConfig};

const WORDS: [&str; 9] = ["amber", "basil", "cedar", "dune", "ember", "fjord", "grove", "heath", "islet"];

struct Fixture {
    vocab: LabelVocabulary,
    tok: Tokenizer,
    train: Vec<TrainingInstance>,
    val: Vec<TrainingInstance>,
    artificial: Vec<TrainingInstance>,
}

/// Three labels per aspect; each document mentions the words of its labels.
fn fixture(n_docs: usize) -> Fixture {
    let labels = Aspect::ALL.into_iter().flat_map(|a| {
        (0..3).map(move |i| Label {
            index: i,
            aspect: a,
            text: WORDS[a.position() * 3 + i].to_string(),
        })
    });
    let vocab = LabelVocabulary::from_labels(labels).unwrap();
    let tok = Tokenizer::from_words(WORDS.iter().copied().chain(["filler"]), 12).unwrap();
    let mut rng = RngStream::new(4);
    let docs: Vec<TrainingInstance> = (0..n_docs)
        .map(|d| {
            let mut targets = PerAspect::<BTreeSet<usize>>::default();
            let mut words = vec!["filler"];
            for a in Aspect::ALL {
                let slot = rng.below(3);
                targets[a].insert(slot);
                words.push(WORDS[a.position() * 3 + slot]);
            }
            rng.shuffle(&mut words);
            let text = words.join(" ");
            TrainingInstance {
                tokens: tok.tokenize(&text),
                text,
                targets,
                provenance: Provenance::Real { id: format!("d{d}") },
            }
        })
        .collect();
    let artificial = construct_instances(Strategy::Li, &vocab, None, None, &tok, &AugmentConfig::default()).unwrap();
    let split = n_docs * 3 / 4;
    Fixture {
        vocab,
        tok,
        train: docs[..split].to_vec(),
        val: docs[split..].to_vec(),
        artificial,
    }
}

fn model_cfg(f: &Fixture) -> ModelConfig {
    ModelConfig {
        encoder: EncoderArch::Transformer(EncoderConfig {
            vocab_size: f.tok.vocab_size(),
            max_len: 12,
            d_model: 16,
            n_blocks: 1,
            n_heads: 2,
            d_ff: 32,
        }),
        d_hidden: 16,
        head_sizes: f.vocab.sizes(),
    }
}

fn data(f: &Fixture) -> TrainingData<'_> {
    TrainingData {
        train: &f.train,
        val: &f.val,
        artificial: &f.artificial,
    }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        max_epochs: epochs,
        lr: 1e-2,
        dropout: 0.0,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn probs_of(rows: &[f64]) -> Predictions {
    Predictions {
        probs: PerAspect::from_fn(|_| rows.to_vec()),
    }
}

fn real_with(slots: &[usize]) -> TrainingInstance {
    TrainingInstance {
        text: String::new(),
        tokens: crate::corpus::TokenSequence { ids: vec![0] },
        targets: PerAspect::from_fn(|_| slots.iter().copied().collect()),
        provenance: Provenance::Real { id: "x".into() },
    }
}

#[test]
fn defaults() {
    let c = TrainConfig::default();
    assert_eq!((c.batch_size, c.max_epochs, c.patience), (16, 150, 10));
    assert_eq!((c.artificial_phase_fraction, c.p_artificial_batch, c.lr), (0.5, 0.5, 1e-4));
    assert_eq!((c.adam_beta1, c.adam_beta2), (0.9, 0.999));
    assert!(c.noise_config().is_none());
    assert_eq!(PretrainConfig::default().batch_size, 4);
}

#[test]
fn invalid_configs() {
    for c in [
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { artificial_phase_fraction: 1.5, ..TrainConfig::default() },
        TrainConfig { p_artificial_batch: -0.1, ..TrainConfig::default() },
        TrainConfig { dropout: 1.0, ..TrainConfig::default() },
        TrainConfig { noise: true, noise_rho: -1.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
    }
}

#[test]
fn grid_has_ten_points() {
    let g = threshold_grid();
    assert_eq!(g.len(), 10);
    assert_eq!(g[0], 0.0);
    assert_eq!(g[9], 1.0);
    for w in g.windows(2) {
        assert!((w[1] - w[0] - 1.0 / 9.0).abs() < 1e-12);
    }
}

#[test]
fn ties_go_to_the_smallest_threshold() {
    let inst = vec![real_with(&[0]); 3];
    let probs = vec![probs_of(&[0.9]); 3];
    let sizes = PerAspect::from_fn(|_| 1);
    let c = tune_threshold_probs(&probs, &inst, &sizes).unwrap();
    assert_eq!(c.threshold, 0.0);
    assert_eq!(c.avg_micro_f1, 1.0);
}

#[test]
fn separation_at_one_half_picks_four_ninths() {
    let inst = vec![real_with(&[0]), real_with(&[1]), real_with(&[0, 1])];
    let probs = vec![probs_of(&[0.6, 0.4]), probs_of(&[0.4, 0.6]), probs_of(&[0.6, 0.6])];
    let sizes = PerAspect::from_fn(|_| 2);
    let c = tune_threshold_probs(&probs, &inst, &sizes).unwrap();

    let mut brute = (f64::NAN, f64::NEG_INFINITY);
    for k in 0..10 {
        let t = k as f64 / 9.0;
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (p, i) in probs.iter().zip(&inst) {
            for s in 0..2 {
                match (p.probs.population[s] >= t, i.targets.population.contains(&s)) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
        }
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        if f1 > brute.1 {
            brute = (t, f1);
        }
    }
    assert_eq!(c.threshold, brute.0);
    assert!((c.threshold - 4.0 / 9.0).abs() < 1e-12);
    let per = tune_thresholds_per_aspect(&probs, &inst, &sizes).unwrap();
    assert_eq!(per.outcome, c.threshold);
}

#[test]
fn short_training_fits_the_fixture() {
    let f = fixture(32);
    let (model, h) = train::<f32>(&model_cfg(&f), data(&f), &quick(60)).unwrap();
    assert!(h.epochs_run() <= 60);
    let report = evaluate(&model, &f.train, 0.5).unwrap();
    assert!(report.avg_micro_f1 > 0.9, "{report:?}");
    assert_eq!(h.best_score(), h.val_avg_micro_f1.iter().cloned().fold(f64::MIN, f64::max));
}

#[test]
fn training_is_deterministic() {
    let f = fixture(16);
    let cfg = TrainConfig {
        dropout: 0.2,
        noise: true,
        noise_scope: NoiseScope::AllTraining,
        ..quick(6)
    };
    let (m1, h1) = train::<f32>(&model_cfg(&f), data(&f), &cfg).unwrap();
    let (m2, h2) = train::<f32>(&model_cfg(&f), data(&f), &cfg).unwrap();
    assert_eq!(h1, h2);
    assert!(m1.params() == m2.params());
}

#[test]
fn stalled_validation_stops_after_patience() {
    let f = fixture(16);
    let cfg = TrainConfig {
        lr: 1e-30,
        patience: 10,
        ..quick(40)
    };
    let (_, h) = train::<f32>(&model_cfg(&f), data(&f), &cfg).unwrap();
    assert_eq!(h.best_epoch, 1);
    assert_eq!(h.epochs_run(), 11);
    assert!(h.stopped_early);
}

#[test]
fn no_artificial_phase_matches_a_real_only_run() {
    let f = fixture(16);
    let cfg = TrainConfig {
        artificial_phase_fraction: 0.0,
        ..quick(4)
    };
    let (_, with_pool) = train::<f32>(&model_cfg(&f), data(&f), &cfg).unwrap();
    let empty = TrainingData {
        artificial: &[],
        ..data(&f)
    };
    let (_, without) = train::<f32>(&model_cfg(&f), empty, &quick(4)).unwrap();
    assert_eq!(with_pool, without);
}

#[test]
fn non_finite_parameters_abort_naming_the_batch() {
    let f = fixture(16);
    let mut model = MultiTaskModel::<f32>::new(model_cfg(&f), 0).unwrap();
    let id = model.params().id("shared.w").unwrap();
    model.params_mut().get_mut(id).data_mut()[0] = f32::NAN;
    match train_from(model, data(&f), &quick(3)) {
        Err(Error::NonFiniteLoss { epoch: 1, batch: 1 }) => {}
        other => panic!("unexpected {:?}", other.map(|(_, h)| h)),
    }
}

#[test]
fn rejects_missing_pools() {
    let f = fixture(16);
    let bad = TrainingData { val: &[], ..data(&f) };
    assert!(train::<f32>(&model_cfg(&f), bad, &quick(2)).is_err());
    let swapped = TrainingData {
        artificial: &f.train,
        ..data(&f)
    };
    assert!(train::<f32>(&model_cfg(&f), swapped, &quick(2)).is_err());
}

#[test]
fn single_point_sweep_equals_train_and_tune() {
    let f = fixture(16);
    let init = MultiTaskModel::<f32>::new(model_cfg(&f), 3).unwrap();
    let cfg = quick(5);
    let out = sweep(&init, data(&f), &cfg, &[0.0], 1).unwrap();
    let (model, history) = train::<f32>(&model_cfg(&f), data(&f), &cfg).unwrap();
    let choice = tune_threshold(&model, &f.val).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.best_threshold, choice.threshold);
    assert_eq!(out.rows[0].val_avg_micro_f1, choice.avg_micro_f1);
    assert_eq!(out.best_history, history);
    assert!(out.best_model.params() == model.params());
}

#[test]
fn sweep_rows_are_sorted_and_independent_of_jobs() {
    let f = fixture(16);
    let init = MultiTaskModel::<f32>::new(model_cfg(&f), 3).unwrap();
    let grid = [0.0, 0.3, 0.6];
    let a = sweep(&init, data(&f), &quick(4), &grid, 1).unwrap();
    let b = sweep(&init, data(&f), &quick(4), &grid, 3).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows.len(), 3);
    for w in a.rows.windows(2) {
        assert!(w[0].val_avg_micro_f1 >= w[1].val_avg_micro_f1);
    }
    assert_eq!(a.best_config.dropout, a.rows[0].dropout);
}

#[test]
fn noise_sweep_keeps_input_order() {
    let f = fixture(16);
    let init = MultiTaskModel::<f32>::new(model_cfg(&f), 3).unwrap();
    let fr = [1.0, 0.0, 0.5];
    let curve = noise_sweep(&init, data(&f), &f.val, &quick(3), &fr, 2).unwrap();
    assert_eq!(curve.iter().map(|c| c.fraction).collect::<Vec<_>>(), fr);
    assert!(noise_sweep(&init, data(&f), &f.val, &quick(3), &[-1.0], 1).is_err());
}

#[test]
fn zero_fraction_equals_noise_free_run() {
    let f = fixture(16);
    let cfg = quick(3);
    let noisy = TrainConfig {
        noise: true,
        noise_rho: 0.0,
        ..cfg.clone()
    };
    let (_, a) = train::<f32>(&model_cfg(&f), data(&f), &cfg).unwrap();
    let (_, b) = train::<f32>(&model_cfg(&f), data(&f), &noisy).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pretrain_smoke() {
    let corpus = parse_surrogate(
        "{\"id\":\"a\",\"text\":\"amber basil\",\"labels\":[\"T1\"]}\n{\"id\":\"b\",\"text\":\"cedar\",\"labels\":[]}\n",
        Path::new("s.jsonl"),
    )
    .unwrap();
    assert_eq!(corpus.labels, vec!["T1".to_string()]);
    let f = fixture(4);
    let arch = model_cfg(&f).encoder;
    let cfg = PretrainConfig {
        lr: 1e-3,
        d_hidden: 8,
        ..PretrainConfig::default()
    };
    let out = pretrain::<f32>(&arch, &corpus, &f.tok, &cfg).unwrap();
    assert_eq!(out.loss.len(), 50);
    assert!(out.loss[49] < out.loss[0]);
    assert!(out.params.iter().all(|(n, _)| n.starts_with("encoder.")));

    let mut fresh = MultiTaskModel::<f32>::new(model_cfg(&f), 9).unwrap();
    let head = fresh.params().by_name("head.p.w").unwrap().clone();
    fresh.load_encoder(&out.encoder, &out.params).unwrap();
    assert_eq!(fresh.params().by_name("encoder.tok_emb"), out.params.by_name("encoder.tok_emb"));
    assert_eq!(fresh.params().by_name("head.p.w").unwrap(), &head);
}

#[test]
fn surrogate_format_errors() {
    let p = Path::new("s.jsonl");
    assert!(parse_surrogate("{\"id\":\"a\",\"text\":\"x\"}\n", p).is_err());
    assert!(parse_surrogate("{\"id\":\"a\",\"text\":\"x\",\"labels\":[1]}\n{\"id\":\"a\",\"text\":\"y\",\"labels\":[1]}\n", p).is_err());
    let c = parse_surrogate("{\"id\":\"a\",\"text\":\"x\",\"labels\":[7, \"7\", \"k\"]}\n", p).unwrap();
    assert_eq!(c.labels, vec!["7".to_string(), "k".to_string()]);
    assert_eq!(c.docs[0].labels.len(), 2);
}
