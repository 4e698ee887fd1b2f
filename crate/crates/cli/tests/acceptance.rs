//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
//! numbers as arguments to run a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use labelaug::augment::{construct_instances, AspectTemplates, AugmentConfig, Provenance, Strategy, SynonymLexicon};
use labelaug::checkpoint;
use labelaug::corpus::{load_vocabulary, Aspect, PerAspect, TokenSequence, Tokenizer};
use labelaug::metrics::{
    average_macro_f1, average_micro_f1, f1_from_pr, macro_prf, micro_prf, AspectMetrics, LabelSets,
};
use labelaug::model::{
    inject_noise, perturb, EncoderArch, EncoderConfig, ModelConfig, Mode, MultiTaskModel, NoiseConfig,
};
use labelaug::neural::{grad_check, layer_norm, Coordinates, LayerNormParams, RngStream, Tensor};
use labelaug::trainer::{
    artificial_phase_epochs, evaluate, make_batch_schedule, train, tune_threshold, BatchKind, TrainConfig,
    TrainingData,
};

use common::{generate, median, small_transformer, Spec};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const MODELS: [&str; 8] = ["CNN", "BERT", "BERT-MeSH", "LI", "LIS", "LISA", "LISAAS", "+ Noise"];

/// Per-aspect rows `(macro_f1, micro_p, micro_r, micro_f1)` in model order.
const TABLE1: [[(f64, f64, f64, f64); 8]; 3] = [
    [
        (0.027, 0.614, 0.506, 0.555),
        (0.037, 0.714, 0.572, 0.635),
        (0.038, 0.719, 0.560, 0.629),
        (0.044, 0.726, 0.604, 0.659),
        (0.043, 0.733, 0.596, 0.658),
        (0.042, 0.757, 0.606, 0.673),
        (0.045, 0.740, 0.603, 0.664),
        (0.046, 0.737, 0.613, 0.670),
    ],
    [
        (0.024, 0.671, 0.418, 0.515),
        (0.029, 0.717, 0.465, 0.564),
        (0.032, 0.729, 0.483, 0.581),
        (0.041, 0.700, 0.549, 0.616),
        (0.041, 0.753, 0.528, 0.621),
        (0.038, 0.743, 0.526, 0.616),
        (0.041, 0.748, 0.540, 0.627),
        (0.042, 0.740, 0.550, 0.631),
    ],
    [
        (0.030, 0.530, 0.333, 0.409),
        (0.036, 0.603, 0.398, 0.480),
        (0.041, 0.612, 0.412, 0.492),
        (0.046, 0.611, 0.468, 0.530),
        (0.045, 0.621, 0.442, 0.517),
        (0.043, 0.629, 0.442, 0.519),
        (0.047, 0.620, 0.453, 0.523),
        (0.047, 0.620, 0.455, 0.525),
    ],
];

/// `(avg micro-F1, avg macro-F1)` in model order.
const TABLE2: [(f64, f64); 8] = [
    (0.493, 0.027),
    (0.559, 0.034),
    (0.567, 0.037),
    (0.601, 0.044),
    (0.599, 0.043),
    (0.603, 0.041),
    (0.605, 0.044),
    (0.609, 0.045),
];

fn c1_table_averages() -> Check {
    let mut misses = Vec::new();
    let mut worst: f64 = 0.0;
    for (m, name) in MODELS.iter().enumerate() {
        let aspects = PerAspect::from_fn(|a| AspectMetrics {
            macro_f1: TABLE1[a.position()][m].0,
            micro_f1: TABLE1[a.position()][m].3,
            ..AspectMetrics::default()
        });
        for (kind, got, want) in [
            ("micro", average_micro_f1(&aspects), TABLE2[m].0),
            ("macro", average_macro_f1(&aspects), TABLE2[m].1),
        ] {
            let diff = (got - want).abs();
            worst = worst.max(diff);
            if diff > 0.0005 {
                misses.push(format!("{name} {kind} {got:.5} vs printed {want:.3} (off by {diff:.5})"));
            }
        }
    }
    ensure(misses.is_empty(), || misses.join("; "))?;
    Ok(format!("16 averages, max deviation {worst:.5}"))
}

fn c2_f1_consistency() -> Check {
    let mut worst: f64 = 0.0;
    for (a, rows) in TABLE1.iter().enumerate() {
        for (m, &(_, p, r, f1)) in rows.iter().enumerate() {
            let diff = (f1_from_pr(p, r) - f1).abs();
            worst = worst.max(diff);
            ensure(diff <= 0.001, || {
                format!("{} / {}: F1({p}, {r}) = {:.5}, printed {f1}", Aspect::ALL[a], MODELS[m], f1_from_pr(p, r))
            })?;
        }
    }
    Ok(format!("24 rows, max deviation {worst:.5}"))
}

fn random_sets(rng: &mut RngStream, docs: usize, labels: usize) -> LabelSets {
    (0..docs)
        .map(|d| {
            let set = (0..labels).filter(|_| rng.bernoulli(0.35)).collect();
            (format!("d{d}"), set)
        })
        .collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Counts every (document, label) pair by direct membership tests.
fn oracle(preds: &LabelSets, golds: &LabelSets, n: usize) -> ([f64; 3], [f64; 3]) {
    let mut per = vec![(0usize, 0usize, 0usize); n];
    for (doc, gold) in golds {
        let pred = &preds[doc];
        for (l, c) in per.iter_mut().enumerate() {
            match (pred.contains(&l), gold.contains(&l)) {
                (true, true) => c.0 += 1,
                (true, false) => c.1 += 1,
                (false, true) => c.2 += 1,
                (false, false) => {}
            }
        }
    }
    let (tp, fp, fn_) = per.iter().fold((0, 0, 0), |s, c| (s.0 + c.0, s.1 + c.1, s.2 + c.2));
    let (p, r) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
    let micro = [p, r, harmonic(p, r)];
    let mut macro_ = [0.0; 3];
    for &(tp, fp, fn_) in &per {
        let (p, r) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
        macro_[0] += p / n as f64;
        macro_[1] += r / n as f64;
        macro_[2] += harmonic(p, r) / n as f64;
    }
    (micro, macro_)
}

fn c3_metrics_oracle() -> Check {
    let mut rng = RngStream::derive(3, "metrics_oracle", 0);
    let cases = 1500;
    for case in 0..cases {
        let docs = 1 + rng.below(10);
        let labels = 1 + rng.below(8);
        let golds = random_sets(&mut rng, docs, labels);
        let preds = random_sets(&mut rng, docs, labels);
        let (want_micro, want_macro) = oracle(&preds, &golds, labels);
        let micro = micro_prf(&preds, &golds).map_err(|e| e.to_string())?;
        let macro_ = macro_prf(&preds, &golds, labels).map_err(|e| e.to_string())?;
        for (got, want, kind) in [
            ([micro.p, micro.r, micro.f1], want_micro, "micro"),
            ([macro_.p, macro_.r, macro_.f1], want_macro, "macro"),
        ] {
            for k in 0..3 {
                ensure((got[k] - want[k]).abs() <= 1e-12, || {
                    format!("case {case}: {kind}[{k}] {} vs oracle {}", got[k], want[k])
                })?;
            }
        }
    }
    Ok(format!("{cases} random cases exact to 1e-12"))
}

fn c4_gradients() -> Check {
    let start = Instant::now();
    let cfg = ModelConfig {
        encoder: EncoderArch::Transformer(EncoderConfig {
            vocab_size: 20,
            max_len: 8,
            d_model: 8,
            n_blocks: 2,
            n_heads: 2,
            d_ff: 16,
        }),
        d_hidden: 8,
        head_sizes: PerAspect {
            population: 3,
            intervention: 4,
            outcome: 5,
        },
    };
    let model = MultiTaskModel::<f64>::new(cfg, 4).map_err(|e| e.to_string())?;
    let tokens = TokenSequence {
        ids: vec![2, 5, 9, 4, 13, 7],
    };
    let mut targets = PerAspect {
        population: vec![0.0; 3],
        intervention: vec![0.0; 4],
        outcome: vec![0.0; 5],
    };
    targets.population[1] = 1.0;
    targets.intervention[0] = 1.0;
    targets.outcome[4] = 1.0;
    let mask = PerAspect::default();
    let n_params: usize = model.params().iter().map(|(_, t)| t.len()).sum();
    let err = grad_check(
        model.params(),
        |g| {
            model
                .loss_var(g, &tokens, &targets, &mask, &mut Mode::Eval, None)
                .expect("loss builds")
        },
        1e-6,
        Coordinates::All,
    )
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(err < 1e-4, || format!("max relative error {err:e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{n_params} coordinates, max relative error {err:.2e}, {secs:.2}s"))
}

fn c5_noise() -> Check {
    let mut rng = RngStream::derive(5, "noise_contract", 0);
    let mut worst: f64 = 0.0;
    for rho in [0.1, 0.5, 1.0, 2.0] {
        for _ in 0..100 {
            let d = 4 + rng.below(60);
            let h: Vec<f64> = (0..d).map(|_| rng.normal() * (0.1 + 5.0 * rng.uniform())).collect();
            let out = perturb(&h, rho, &mut rng).map_err(|e| e.to_string())?;
            let eps = out.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = (eps - rho * norm).abs() / (rho * norm);
            worst = worst.max(rel);
            ensure(rel <= 1e-6, || format!("rho {rho}: relative error {rel:e}"))?;
        }
    }
    for _ in 0..100 {
        let d = 4 + rng.below(60);
        let h: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let ln = LayerNormParams {
            gain: (0..d).map(|_| 1.0 + 0.2 * rng.normal()).collect(),
            bias: (0..d).map(|_| 0.1 * rng.normal()).collect(),
            eps: 1e-5,
        };
        let cfg = NoiseConfig {
            rho: 0.0,
            ..NoiseConfig::default()
        };
        let noisy = inject_noise(&h, &cfg, &ln, &mut rng).map_err(|e| e.to_string())?;
        ensure(noisy == layer_norm(&h, &ln).map_err(|e| e.to_string())?, || {
            "rho = 0 differs from layer normalization".into()
        })?;
    }
    Ok(format!("400 perturbations, max relative error {worst:.1e}; rho = 0 exact"))
}

fn c6_schedules() -> Check {
    let mut rng = RngStream::derive(6, "schedule_contract", 0);
    let mut batches = 0usize;
    for s in 0..1000u64 {
        let n_real = 1 + rng.below(60);
        let n_art = if s % 10 == 0 { 0 } else { 1 + rng.below(80) };
        let epochs = 1 + rng.below(20);
        let cfg = TrainConfig {
            batch_size: 1 + rng.below(16),
            ..TrainConfig::default()
        };
        let real: Vec<usize> = (0..n_real).collect();
        let art: Vec<usize> = (10_000..10_000 + n_art).collect();
        let sched = make_batch_schedule(epochs, &real, &art, &cfg, &RngStream::new(s)).map_err(|e| e.to_string())?;
        let phase = artificial_phase_epochs(epochs, 0.5);
        ensure(phase == (epochs as f64 * 0.5).ceil() as usize, || format!("phase of {epochs} epochs"))?;
        for (e, epoch) in sched.epochs.iter().enumerate() {
            for b in epoch {
                batches += 1;
                let artificial = b.members.iter().filter(|&&m| m >= 10_000).count();
                let mixed = artificial != 0 && artificial != b.members.len();
                ensure(!mixed && !b.members.is_empty(), || format!("schedule {s}: mixed batch in epoch {e}"))?;
                let is_art = b.kind == BatchKind::AllArtificial;
                ensure(is_art == (artificial > 0), || format!("schedule {s}: batch kind disagrees with members"))?;
                ensure(!is_art || e < phase, || format!("schedule {s}: artificial batch in epoch {e} >= {phase}"))?;
                ensure(!is_art || n_art > 0, || format!("schedule {s}: artificial batch from an empty pool"))?;
            }
        }
    }
    Ok(format!("1000 schedules, {batches} batches, none mixed or late"))
}

fn demo_file(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/demo").join(name)
}

fn c7_augmentation() -> Check {
    let vocab = load_vocabulary(demo_file("labels.tsv")).map_err(|e| e.to_string())?;
    let lex = SynonymLexicon::load(demo_file("lexicon.json")).map_err(|e| e.to_string())?;
    let templates = AspectTemplates::load(demo_file("templates.tsv")).map_err(|e| e.to_string())?;
    let tok = Tokenizer::demo(128);
    let build = |s: Strategy| {
        construct_instances(s, &vocab, Some(&lex), Some(&templates), &tok, &AugmentConfig::default())
            .map_err(|e| e.to_string())
    };
    let li = build(Strategy::Li)?;
    let lis = build(Strategy::Lis)?;
    let lisa = build(Strategy::Lisa)?;
    let lisaas = build(Strategy::Lisaas)?;

    let lis_texts: BTreeSet<&str> = lis.iter().map(|i| i.text.as_str()).collect();
    for i in &li {
        ensure(lis_texts.contains(i.text.as_str()), || format!("LI text {:?} missing from LIS", i.text))?;
    }
    for inst in &lis {
        let Provenance::Artificial { aspect, index, .. } = &inst.provenance else {
            return Err("LIS produced a real instance".into());
        };
        let source = &vocab.by_index(*aspect, *index).ok_or("unknown source label")?.text;
        let a: Vec<&str> = source.split_whitespace().collect();
        let b: Vec<&str> = inst.text.split_whitespace().collect();
        let edits = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        ensure(a.len() == b.len() && edits <= 1, || format!("{:?} is not a one-word edit of {source:?}", inst.text))?;
    }
    let mut total = 0;
    for inst in li.iter().chain(&lis).chain(&lisa).chain(&lisaas) {
        total += 1;
        let Provenance::Artificial { aspect, index, .. } = &inst.provenance else {
            return Err("real instance among artificial ones".into());
        };
        let positives: Vec<(Aspect, usize)> = inst
            .targets
            .iter()
            .flat_map(|(a, s)| s.iter().map(move |&slot| (a, slot)))
            .collect();
        ensure(positives == vec![(*aspect, vocab.slot(*aspect, *index).unwrap())], || {
            format!("{:?} has positives {positives:?}", inst.text)
        })?;
    }
    for (texts, want) in [
        (&lis, "Conclusion Relating To Institutionalization"),
        (&lisaas, "The population of the trial consists of patients with Diabetes"),
        (&lisa, "Outcome Finding Relating To Institutionalization"),
    ] {
        ensure(texts.iter().any(|i| i.text == want), || format!("{want:?} not produced"))?;
    }
    Ok(format!(
        "{total} instances; LI {} / LIS {} / LISA {} / LISAAS {}; worked examples verbatim",
        li.len(),
        lis.len(),
        lisa.len(),
        lisaas.len()
    ))
}

fn c8_overfit() -> Check {
    let start = Instant::now();
    let task = generate(&Spec {
        labels: [4, 3, 3],
        n_train: 20,
        n_val: 0,
        n_test: 0,
        rare_share: 0.0,
        seed: 8,
    });
    let train_set = task.instances(&task.train);
    let cfg = TrainConfig {
        lr: 3e-3,
        batch_size: 4,
        dropout: 0.0,
        max_epochs: 150,
        patience: 150,
        seed: 8,
        ..TrainConfig::default()
    };
    let data = TrainingData {
        train: &train_set,
        val: &train_set,
        artificial: &[],
    };
    let (model, history) = train::<f32>(&small_transformer(&task, 16), data, &cfg).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &train_set, 0.5).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(report.avg_micro_f1 >= 0.95, || format!("train avg micro-F1 {:.3}", report.avg_micro_f1))?;
    ensure(secs < 120.0, || format!("took {secs:.0}s"))?;
    Ok(format!(
        "train avg micro-F1 {:.3} at epoch {}, {secs:.1}s",
        report.avg_micro_f1, history.best_epoch
    ))
}

fn c9_directional() -> Check {
    let start = Instant::now();
    let mut baseline = Vec::new();
    let mut augmented = Vec::new();
    for seed in 0..5u64 {
        let task = generate(&Spec {
            labels: [14, 13, 13],
            n_train: 80,
            n_val: 30,
            n_test: 80,
            rare_share: 0.5,
            seed: 100 + seed,
        });
        for (a, rare) in task.rare.iter() {
            for &l in rare {
                ensure(task.train_count(a, l) <= 1, || format!("rare label {l} has more than one document"))?;
            }
        }
        let (train_set, val, test) = (task.instances(&task.train), task.instances(&task.val), task.instances(&task.test));
        let li = construct_instances(Strategy::Li, &task.vocab, None, None, &task.tok, &AugmentConfig::default())
            .map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            lr: 3e-3,
            batch_size: 8,
            max_epochs: 60,
            patience: 10,
            seed,
            ..TrainConfig::default()
        };
        let model_cfg = small_transformer(&task, 16);
        for (pool, out) in [(&[][..], &mut baseline), (&li[..], &mut augmented)] {
            let data = TrainingData {
                train: &train_set,
                val: &val,
                artificial: pool,
            };
            let (model, _) = train::<f32>(&model_cfg, data, &cfg).map_err(|e| e.to_string())?;
            let t = tune_threshold(&model, &val).map_err(|e| e.to_string())?.threshold;
            out.push(evaluate(&model, &test, t).map_err(|e| e.to_string())?.avg_macro_f1);
        }
    }
    let (b, a) = (median(baseline.clone()), median(augmented.clone()));
    let secs = start.elapsed().as_secs_f64();
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    let detail = format!(
        "median test macro-F1 real-only {b:.3} [{}] vs LI {a:.3} [{}], gain {:+.3}, {secs:.0}s",
        fmt(&baseline),
        fmt(&augmented),
        a - b
    );
    ensure(a - b >= 0.02, || detail.clone())?;
    ensure(secs < 600.0, || format!("{detail}; over 10 minutes"))?;
    Ok(detail)
}

fn c10_reproducibility() -> Check {
    let task = generate(&Spec {
        labels: [4, 3, 3],
        n_train: 24,
        n_val: 8,
        n_test: 8,
        rare_share: 0.3,
        seed: 10,
    });
    let (train_set, val, test) = (task.instances(&task.train), task.instances(&task.val), task.instances(&task.test));
    let li = construct_instances(Strategy::Li, &task.vocab, None, None, &task.tok, &AugmentConfig::default())
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 3e-3,
        batch_size: 4,
        max_epochs: 12,
        noise: true,
        seed: 10,
        ..TrainConfig::default()
    };
    let data = TrainingData {
        train: &train_set,
        val: &val,
        artificial: &li,
    };
    let model_cfg = small_transformer(&task, 16);
    let run = || -> Result<(String, String, MultiTaskModel<f32>), String> {
        let (model, history) = train::<f32>(&model_cfg, data, &cfg).map_err(|e| e.to_string())?;
        let report = evaluate(&model, &test, 0.5).map_err(|e| e.to_string())?;
        Ok((
            serde_json::to_string(&history).unwrap(),
            serde_json::to_string(&report).unwrap(),
            model,
        ))
    };
    let (h1, r1, model) = run()?;
    let (h2, r2, _) = run()?;
    ensure(h1 == h2, || "History differs between identical runs".into())?;
    ensure(r1 == r2, || "EvalReport differs between identical runs".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.ckpt");
    checkpoint::save_model(&model, &path, serde_json::Value::Null).map_err(|e| e.to_string())?;
    let (back, _) = checkpoint::load_model::<f32>(&path).map_err(|e| e.to_string())?;
    let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<u32>>();
    let names: Vec<&str> = model.params().iter().map(|(n, _)| n).collect();
    for (name, t) in model.params().iter() {
        let other = back.params().by_name(name).ok_or(format!("{name} missing after reload"))?;
        ensure(bits(t) == bits(other), || format!("{name} changed in the round trip"))?;
    }
    ensure(back.params().iter().count() == names.len(), || "reloaded model has extra tensors".into())?;

    let mut other_cfg = model_cfg.clone();
    other_cfg.head_sizes = PerAspect {
        population: 2,
        intervention: 5,
        outcome: 1,
    };
    let fresh = MultiTaskModel::<f32>::new(other_cfg.clone(), 77).map_err(|e| e.to_string())?;
    let mut target = fresh.clone();
    checkpoint::load_encoder_into(&mut target, &path).map_err(|e| e.to_string())?;
    let mut n_enc = 0;
    for (name, t) in target.params().iter() {
        if name.starts_with("encoder.") {
            n_enc += 1;
            ensure(bits(t) == bits(model.params().by_name(name).unwrap()), || format!("{name} not transferred"))?;
        } else {
            ensure(t == fresh.params().by_name(name).unwrap(), || format!("{name} not freshly initialized"))?;
            if let Some(src) = model.params().by_name(name) {
                ensure(t != src, || format!("{name} copied from the checkpoint"))?;
            }
        }
    }
    Ok(format!(
        "History/EvalReport byte-identical; {} tensors round-trip bit-exactly; {n_enc} encoder tensors transferred",
        names.len()
    ))
}

fn c11_noise_sweep_harness() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "d_model = 8\nn_blocks = 1\nn_heads = 2\nd_ff = 16\nd_hidden = 8\nmax_len = 48\n\
         max_epochs = 6\npatience = 3\nbatch_size = 8\nlr = 0.003\nnoise_scope = \"all_training\"\n",
    )
    .map_err(|e| e.to_string())?;
    let out = dir.path().join("curve.csv");
    let fractions: Vec<String> = (0..=10).map(|i| format!("{:.1}", i as f64 * 0.2)).collect();
    let status = Command::new(env!("CARGO_BIN_EXE_labelaug"))
        .args(["noise-sweep", "--config"])
        .arg(&config)
        .arg("--data")
        .arg(demo_file("trials.jsonl"))
        .arg("--vocab")
        .arg(demo_file("labels.tsv"))
        .args(["--fractions", &fractions.join(","), "--jobs", "4", "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
    let text = fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().collect();
    ensure(lines.first() == Some(&"fraction,threshold,avg_micro_f1,avg_macro_f1"), || "bad header".into())?;
    ensure(lines.len() == 12, || format!("{} data rows", lines.len() - 1))?;
    for (line, want) in lines[1..].iter().zip(&fractions) {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("{line:?}: {e}"))?;
        ensure(cells.len() == 4, || format!("{line:?} has {} cells", cells.len()))?;
        ensure((cells[0] - want.parse::<f64>().unwrap()).abs() < 1e-9, || format!("row order: {line:?}"))?;
        ensure(cells[1..].iter().all(|v| (0.0..=1.0).contains(v)), || format!("out of range: {line:?}"))?;
    }
    let best = lines[1..]
        .iter()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .max_by(|a, b| a[2].cmp(b[2]))
        .map(|c| c[0].to_string())
        .unwrap_or_default();
    Ok(format!("11 rows over [0, 2]; best fraction on the demo corpus {best}"))
}

type Criterion = (u32, &'static str, fn() -> Check);

const CRITERIA: [Criterion; 11] = [
    (1, "table arithmetic: averages", c1_table_averages),
    (2, "table arithmetic: F1 consistency", c2_f1_consistency),
    (3, "metrics oracle", c3_metrics_oracle),
    (4, "gradient correctness", c4_gradients),
    (5, "noise contract", c5_noise),
    (6, "schedule contract", c6_schedules),
    (7, "augmentation contracts", c7_augmentation),
    (8, "overfit sanity", c8_overfit),
    (9, "directional benefit on rare labels", c9_directional),
    (10, "reproducibility and persistence", c10_reproducibility),
    (11, "noise-sweep harness", c11_noise_sweep_harness),
];

fn main() {
    let wanted: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        for (id, name, _) in CRITERIA {
            println!("criterion_{id}: test ({name})");
        }
        return;
    }
    panic::set_hook(Box::new(|_| {}));
    let mut results = BTreeMap::new();
    for (id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let took = start.elapsed();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {id:>2} ({name}) [{}]: {detail}", secs(took));
        results.insert(id, outcome.is_ok());
    }
    let failed: Vec<String> = results.iter().filter(|(_, ok)| !**ok).map(|(id, _)| id.to_string()).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" (criteria {})", failed.join(", ")) }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}
