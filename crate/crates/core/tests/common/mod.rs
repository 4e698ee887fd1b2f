//! Synthetic PICO-style corpora whose label-texts occur verbatim in the
//! documents that carry them.

#![allow(dead_code)]

use std::collections::BTreeSet;

use labelaug::augment::{real_instances, TrainingInstance};
use labelaug::corpus::{Aspect, Document, Label, LabelVocabulary, PerAspect, Tokenizer};
use labelaug::model::{EncoderArch, EncoderConfig, ModelConfig};
use labelaug::neural::RngStream;

const ONSETS: [&str; 8] = ["ka", "lo", "mi", "nu", "pe", "ra", "si", "to"];
const CODAS: [&str; 8] = ["ber", "dax", "fen", "gol", "hin", "jup", "kor", "lim"];
const FILLER: [&str; 16] = [
    "the", "trial", "patients", "were", "given", "and", "assessed", "for", "with", "study", "group", "after",
    "weeks", "daily", "reported", "was",
];

/// Two invented words unique to label `k`.
pub fn label_text(k: usize) -> String {
    let w = |salt: usize| {
        let i = k * 2 + salt;
        let mut s = format!("{}{}", ONSETS[i % 8], CODAS[(i / 8) % 8]);
        s[..1].make_ascii_uppercase();
        s
    };
    format!("{} {}", w(0), w(1))
}

#[derive(Clone, Debug)]
pub struct Spec {
    pub labels: [usize; 3],
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Per aspect, the trailing share of labels that are rare in training.
    pub rare_share: f64,
    pub seed: u64,
}

pub struct Task {
    pub vocab: LabelVocabulary,
    pub tok: Tokenizer,
    pub train: Vec<Document>,
    pub val: Vec<Document>,
    pub test: Vec<Document>,
    /// Label indexes per aspect that are rare in training.
    pub rare: PerAspect<BTreeSet<usize>>,
}

impl Task {
    pub fn instances(&self, docs: &[Document]) -> Vec<TrainingInstance> {
        real_instances(docs, &self.vocab, &self.tok).unwrap()
    }

    pub fn train_count(&self, aspect: Aspect, index: usize) -> usize {
        self.train.iter().filter(|d| d.gold[aspect].contains(&index)).count()
    }
}

fn document(id: String, gold: PerAspect<usize>, vocab: &LabelVocabulary, rng: &mut RngStream) -> Document {
    let mut words = Vec::new();
    for a in Aspect::ALL {
        for _ in 0..1 + rng.below(2) {
            words.push(FILLER[rng.below(FILLER.len())].to_string());
        }
        words.push(vocab.by_index(a, gold[a]).unwrap().text.clone());
    }
    words.push(FILLER[rng.below(FILLER.len())].to_string());
    Document {
        id,
        text: words.join(" "),
        gold: gold.map(|_, &i| BTreeSet::from([i])),
    }
}

pub fn generate(spec: &Spec) -> Task {
    let mut labels = Vec::new();
    let mut k = 0;
    for (a, &n) in Aspect::ALL.iter().zip(&spec.labels) {
        for i in 0..n {
            labels.push(Label {
                index: i,
                aspect: *a,
                text: label_text(k),
            });
            k += 1;
        }
    }
    let vocab = LabelVocabulary::from_labels(labels).unwrap();
    let sizes = vocab.sizes();
    let n_rare = sizes.map(|_, &n| ((n as f64 * spec.rare_share).round() as usize).min(n - 1));
    let rare = PerAspect::from_fn(|a| (sizes[a] - n_rare[a]..sizes[a]).collect::<BTreeSet<usize>>());

    let mut rng = RngStream::derive(spec.seed, "synthetic", 0);
    // Every other rare label gets exactly one training document.
    let singles: Vec<PerAspect<Option<usize>>> = {
        let per: PerAspect<Vec<usize>> = rare.map(|_, r| r.iter().copied().step_by(2).collect());
        let n = per.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        (0..n).map(|j| per.map(|_, v| v.get(j).copied())).collect()
    };
    let mut train = Vec::with_capacity(spec.n_train);
    for i in 0..spec.n_train {
        let gold = PerAspect::from_fn(|a| {
            let forced = singles.get(i).and_then(|s| s[a]);
            forced.unwrap_or_else(|| rng.below(sizes[a] - n_rare[a]))
        });
        train.push(document(format!("train-{i:03}"), gold, &vocab, &mut rng));
    }
    let mut held_out = |prefix: &str, n: usize| -> Vec<Document> {
        (0..n)
            .map(|i| {
                let gold = PerAspect::from_fn(|a| rng.below(sizes[a]));
                document(format!("{prefix}-{i:03}"), gold, &vocab, &mut rng)
            })
            .collect()
    };
    let val = held_out("val", spec.n_val);
    let test = held_out("test", spec.n_test);

    let words: BTreeSet<String> = train
        .iter()
        .chain(&val)
        .chain(&test)
        .flat_map(|d| d.text.to_lowercase().split_whitespace().map(String::from).collect::<Vec<_>>())
        .chain(vocab.iter().flat_map(|l| l.text.to_lowercase().split_whitespace().map(String::from).collect::<Vec<_>>()))
        .collect();
    let tok = Tokenizer::from_words(words.iter().map(String::as_str), 24).unwrap();
    Task {
        vocab,
        tok,
        train,
        val,
        test,
        rare,
    }
}

pub fn small_transformer(task: &Task, d: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderArch::Transformer(EncoderConfig {
            vocab_size: task.tok.vocab_size(),
            max_len: task.tok.max_len(),
            d_model: d,
            n_blocks: 1,
            n_heads: 2,
            d_ff: 2 * d,
        }),
        d_hidden: d,
        head_sizes: task.vocab.sizes(),
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
