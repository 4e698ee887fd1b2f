use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use labelaug::augment::{
    construct_instances, load_instances, real_instances, write_instances, AspectTemplates, AugmentConfig, Strategy,
    SynonymLexicon, TrainingInstance,
};
use labelaug::checkpoint::{self, Header};
use labelaug::corpus::{dataset_stats, load_dataset, load_vocabulary, split_dataset, Tokenizer};
use labelaug::metrics::EvalReport;
use labelaug::model::MultiTaskModel;
use labelaug::report::{parse_csv, render_csv, render_curve_csv, render_grid, render_sweep_csv};
use labelaug::trainer::{
    evaluate, load_surrogate, noise_sweep, pretrain, sweep, train_from, tune_threshold, History, TrainingData,
};
use labelaug::Error;
use serde_json::json;

use crate::config::{EvalSplit, RunConfig};
use crate::{
    AugmentArgs, CliError, CliResult, Command, EvalArgs, Format, NoiseSweepArgs, PretrainArgs, ReportArgs, RunArgs,
    StatsArgs, SweepArgs, TrainArgs,
};

pub(crate) fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Augment(a) => augment_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::NoiseSweep(a) => noise_sweep_cmd(a),
        Command::Stats(a) => stats_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_error(context: String, source: std::io::Error) -> CliError {
    CliError::Lib(Error::Io { context, source })
}

fn base_config(path: Option<&Path>) -> CliResult<RunConfig> {
    Ok(path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)?)
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| usage(format!("missing --{} (or `{key}` in the config file)", key.replace('_', "-"))))
}

/// `path` with `.suffix` appended to the full file name.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_error(format!("writing {}", path.display()), e))
}

fn write_manifest(out: &Path, cfg: &RunConfig, command: &str) -> CliResult<()> {
    let mut cfg = cfg.clone();
    cfg.run.command = Some(command.into());
    write_text(&sidecar(out, "manifest.toml"), &cfg.to_toml())
}

fn run_config(args: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = base_config(args.config.as_deref())?;
    let r = &mut cfg.run;
    set(&mut r.data, args.data.clone());
    set(&mut r.vocab, args.vocab.clone());
    set(&mut r.tokens, args.tokens.clone());
    set(&mut r.artificial, args.artificial.clone());
    set(&mut r.init, args.init.clone());
    r.encoder_only |= args.encoder_only;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn token_list(tok: &Tokenizer) -> Vec<String> {
    (0..tok.vocab_size() as u32)
        .map(|i| tok.token(i).unwrap_or_default().to_string())
        .collect()
}

/// Whole-word tokenizer over every lowercased word of `texts`.
fn corpus_tokenizer<'a>(texts: impl IntoIterator<Item = &'a str>, max_len: usize) -> labelaug::Result<Tokenizer> {
    let words: BTreeSet<String> = texts
        .into_iter()
        .flat_map(|t| t.to_lowercase().split_whitespace().map(String::from).collect::<Vec<_>>())
        .collect();
    Tokenizer::from_words(words.iter().map(String::as_str), max_len)
}

fn read_header(path: &Path) -> CliResult<Header> {
    let bytes = fs::read(path).map_err(|e| io_error(format!("reading checkpoint {}", path.display()), e))?;
    Ok(checkpoint::decode::<f32>(&bytes)?.0)
}

fn header_tokenizer(header: &Header, max_len: usize) -> CliResult<Option<Tokenizer>> {
    let Some(v) = header.metadata.get("tokens") else {
        return Ok(None);
    };
    let tokens: Vec<String> = serde_json::from_value(v.clone())
        .map_err(|e| Error::CorruptCheckpoint(format!("tokenizer metadata: {e}")))?;
    Ok(Some(Tokenizer::new(tokens, max_len)?))
}

fn check_resources(strategy: Strategy, cfg: &RunConfig) -> CliResult<()> {
    if strategy.needs_lexicon() && cfg.run.lexicon.is_none() {
        return Err(usage(format!("strategy {strategy} needs --lexicon")));
    }
    if strategy.needs_templates() && cfg.run.templates.is_none() {
        return Err(usage(format!("strategy {strategy} needs --templates")));
    }
    Ok(())
}

fn load_resources(
    strategy: Strategy,
    cfg: &RunConfig,
) -> CliResult<(Option<SynonymLexicon>, Option<AspectTemplates>)> {
    check_resources(strategy, cfg)?;
    let lex = match (&cfg.run.lexicon, strategy.needs_lexicon()) {
        (Some(p), true) => Some(SynonymLexicon::load(p)?),
        _ => None,
    };
    let templates = match (&cfg.run.templates, strategy.needs_templates()) {
        (Some(p), true) => Some(AspectTemplates::load(p)?),
        _ => None,
    };
    Ok((lex, templates))
}

fn augment_config(cfg: &RunConfig) -> AugmentConfig {
    AugmentConfig {
        max_variants: cfg.run.max_variants,
        seed: cfg.run.augment_seed,
    }
}

/// Everything a training subcommand needs, loaded and validated up front.
struct Prepared {
    cfg: RunConfig,
    tok: Tokenizer,
    train: Vec<TrainingInstance>,
    val: Vec<TrainingInstance>,
    test: Vec<TrainingInstance>,
    artificial: Vec<TrainingInstance>,
    initial: MultiTaskModel<f32>,
}

impl Prepared {
    fn data(&self) -> TrainingData<'_> {
        TrainingData {
            train: &self.train,
            val: &self.val,
            artificial: &self.artificial,
        }
    }

    fn metadata(&self, threshold: f64, train: &labelaug::trainer::TrainConfig, history: &History) -> serde_json::Value {
        json!({
            "threshold": threshold,
            "max_len": self.tok.max_len(),
            "tokens": token_list(&self.tok),
            "split_seed": self.cfg.run.split_seed,
            "train": train,
            "history": history,
        })
    }
}

fn prepare(mut cfg: RunConfig) -> CliResult<Prepared> {
    require(&cfg.run.data, "data")?;
    require(&cfg.run.vocab, "vocab")?;
    if cfg.run.encoder_only && cfg.run.init.is_none() {
        return Err(usage("--encoder-only needs --init"));
    }
    if let (None, Some(s)) = (&cfg.run.artificial, cfg.run.strategy) {
        check_resources(s, &cfg)?;
    }
    cfg.validate()?;
    cfg.run.check_paths()?;
    let resources = match (&cfg.run.artificial, cfg.run.strategy) {
        (None, Some(s)) => Some((s, load_resources(s, &cfg)?)),
        _ => None,
    };
    let r = &cfg.run;
    let vocab = load_vocabulary(r.vocab.as_ref().expect("checked"))?;
    let dataset = load_dataset(r.data.as_ref().expect("checked"), &vocab)?;
    let init_header = r.init.as_deref().map(read_header).transpose()?;

    let placeholder = Tokenizer::from_words([], r.max_len)?;
    let mut artificial = match (&r.artificial, resources) {
        (Some(path), _) => load_instances(path, &vocab, &placeholder)?,
        (None, Some((s, (lex, templates)))) => construct_instances(
            s,
            &vocab,
            lex.as_ref(),
            templates.as_ref(),
            &placeholder,
            &augment_config(&cfg),
        )?,
        (None, None) => Vec::new(),
    };
    let from_header = match &init_header {
        Some(h) => header_tokenizer(h, r.max_len)?,
        None => None,
    };
    let tok = match (&r.tokens, from_header) {
        (Some(path), _) => Tokenizer::from_file(path, r.max_len)?,
        (None, Some(tok)) => tok,
        (None, None) => corpus_tokenizer(
            dataset
                .documents
                .iter()
                .map(|d| d.text.as_str())
                .chain(artificial.iter().map(|i| i.text.as_str()))
                .chain(vocab.iter().map(|l| l.text.as_str())),
            r.max_len,
        )?,
    };
    for inst in &mut artificial {
        inst.tokens = tok.tokenize(&inst.text);
    }

    let splits = split_dataset(&dataset, r.split_seed)?;
    let train = real_instances(&splits.train, &vocab, &tok)?;
    let val = real_instances(&splits.nested_val, &vocab, &tok)?;
    let test = real_instances(&splits.test, &vocab, &tok)?;

    let model_cfg = cfg.model_config(tok.vocab_size(), vocab.sizes());
    let initial = match (&r.init, r.encoder_only) {
        (Some(path), false) => {
            let (model, _) = checkpoint::load_model::<f32>(path)?;
            if model.config() != &model_cfg {
                return Err(Error::Validation(format!(
                    "{} was trained with a different model configuration; use --encoder-only to take its encoder",
                    path.display()
                ))
                .into());
            }
            model
        }
        (Some(path), true) => {
            let mut model = MultiTaskModel::new(model_cfg, cfg.train.seed)?;
            checkpoint::load_encoder_into(&mut model, path)?;
            model
        }
        (None, _) => MultiTaskModel::new(model_cfg, cfg.train.seed)?,
    };
    Ok(Prepared {
        cfg,
        tok,
        train,
        val,
        test,
        artificial,
        initial,
    })
}

fn augment_cmd(a: AugmentArgs) -> CliResult<()> {
    let mut cfg = base_config(a.config.as_deref())?;
    let r = &mut cfg.run;
    set(&mut r.strategy, a.strategy);
    set(&mut r.vocab, a.vocab);
    set(&mut r.lexicon, a.lexicon);
    set(&mut r.templates, a.templates);
    if let Some(k) = a.max_variants {
        r.max_variants = k;
    }
    if let Some(seed) = a.seed {
        r.augment_seed = seed;
    }
    let strategy = r.strategy.ok_or_else(|| usage("missing --strategy"))?;
    require(&cfg.run.vocab, "vocab")?;
    check_resources(strategy, &cfg)?;
    cfg.validate()?;
    cfg.run.check_paths()?;
    let (lex, templates) = load_resources(strategy, &cfg)?;
    let vocab = load_vocabulary(cfg.run.vocab.as_ref().expect("checked"))?;
    let tok = corpus_tokenizer(vocab.iter().map(|l| l.text.as_str()), cfg.run.max_len)?;
    let instances = construct_instances(
        strategy,
        &vocab,
        lex.as_ref(),
        templates.as_ref(),
        &tok,
        &augment_config(&cfg),
    )?;
    write_instances(&a.out, &instances, &vocab)?;
    write_manifest(&a.out, &cfg, "augment")?;
    println!(
        "{strategy}: {} artificial instances from {} labels -> {}",
        instances.len(),
        vocab.len(),
        a.out.display()
    );
    Ok(())
}

fn print_report(report: &EvalReport) {
    print!("{}", render_grid(&[("test".to_string(), report.clone())], false));
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let p = prepare(run_config(&a.run)?)?;
    let (model, history) = train_from(p.initial.clone(), p.data(), &p.cfg.train)?;
    let choice = tune_threshold(&model, &p.val)?;
    let report = evaluate(&model, &p.test, choice.threshold)?;
    checkpoint::save_model(&model, &a.out, p.metadata(choice.threshold, &p.cfg.train, &history))?;
    write_text(
        &sidecar(&a.out, "history.json"),
        &serde_json::to_string_pretty(&history).expect("history serializes"),
    )?;
    write_text(&sidecar(&a.out, "eval.csv"), &render_csv(&report))?;
    write_manifest(&a.out, &p.cfg, "train")?;
    println!(
        "{} real + {} artificial training instances; {} epochs, best epoch {}, threshold {:.3}",
        p.train.len(),
        p.artificial.len(),
        history.epochs_run(),
        history.best_epoch,
        choice.threshold
    );
    print_report(&report);
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CliResult<()> {
    let mut cfg = base_config(a.config.as_deref())?;
    let r = &mut cfg.run;
    set(&mut r.model, a.model);
    set(&mut r.data, a.data);
    set(&mut r.vocab, a.vocab);
    set(&mut r.tokens, a.tokens);
    set(&mut r.threshold, a.threshold);
    if let Some(s) = a.split {
        r.eval_split = s;
    }
    require(&cfg.run.model, "model")?;
    require(&cfg.run.data, "data")?;
    require(&cfg.run.vocab, "vocab")?;
    cfg.validate()?;
    cfg.run.check_paths()?;

    let (model, header) = checkpoint::load_model::<f32>(cfg.run.model.as_ref().expect("checked"))?;
    let max_len = model.config().encoder.max_len();
    let tok = match &cfg.run.tokens {
        Some(path) => Tokenizer::from_file(path, max_len)?,
        None => header_tokenizer(&header, max_len)?
            .ok_or_else(|| Error::Validation("the checkpoint carries no tokenizer; pass --tokens".into()))?,
    };
    let vocab = load_vocabulary(cfg.run.vocab.as_ref().expect("checked"))?;
    if vocab.sizes() != model.config().head_sizes {
        return Err(Error::Validation(format!(
            "vocabulary sizes {:?} do not match the model heads {:?}",
            vocab.sizes(),
            model.config().head_sizes
        ))
        .into());
    }
    let dataset = load_dataset(cfg.run.data.as_ref().expect("checked"), &vocab)?;
    if let Some(seed) = header.metadata.get("split_seed").and_then(|v| v.as_u64()) {
        cfg.run.split_seed = seed;
    }
    let docs = match cfg.run.eval_split {
        EvalSplit::Test => split_dataset(&dataset, cfg.run.split_seed)?.test,
        EvalSplit::All => dataset.documents,
    };
    let threshold = cfg
        .run
        .threshold
        .or_else(|| header.metadata.get("threshold").and_then(|v| v.as_f64()))
        .unwrap_or(0.5);
    cfg.run.threshold = Some(threshold);
    let instances = real_instances(&docs, &vocab, &tok)?;
    let report = evaluate(&model, &instances, threshold)?;
    if let Some(out) = &a.out {
        write_text(out, &render_csv(&report))?;
        write_manifest(out, &cfg, "eval")?;
    }
    match a.format {
        Format::Csv => print!("{}", render_csv(&report)),
        Format::Table => print_report(&report),
    }
    Ok(())
}

/// Numbers separated by commas or whitespace, read from a file when `spec`
/// names one.
fn parse_numbers(spec: &str, what: &str) -> CliResult<Vec<f64>> {
    let text = if Path::new(spec).is_file() {
        fs::read_to_string(spec).map_err(|e| io_error(format!("reading {what} {spec}"), e))?
    } else {
        spec.to_string()
    };
    let values = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or_default())
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| usage(format!("{what}: {s:?} is not a number"))))
        .collect::<CliResult<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(usage(format!("{what} is empty")));
    }
    Ok(values)
}

fn sweep_cmd(a: SweepArgs) -> CliResult<()> {
    let mut cfg = run_config(&a.run)?;
    if let Some(g) = &a.grid {
        cfg.run.dropout_grid = parse_numbers(g, "dropout grid")?;
    }
    let p = prepare(cfg)?;
    let outcome = sweep(&p.initial, p.data(), &p.cfg.train, &p.cfg.run.dropout_grid, a.jobs)?;
    let report = evaluate(&outcome.best_model, &p.test, outcome.best_threshold)?;
    write_text(&a.out, &render_sweep_csv(&outcome.rows))?;
    let best = sidecar(&a.out, "best.ckpt");
    checkpoint::save_model(
        &outcome.best_model,
        &best,
        p.metadata(outcome.best_threshold, &outcome.best_config, &outcome.best_history),
    )?;
    write_text(&sidecar(&a.out, "eval.csv"), &render_csv(&report))?;
    write_manifest(&a.out, &p.cfg, "sweep")?;
    print!("{}", render_sweep_csv(&outcome.rows));
    println!(
        "best dropout {:.3}, threshold {:.3} -> {}",
        outcome.best_config.dropout,
        outcome.best_threshold,
        best.display()
    );
    print_report(&report);
    Ok(())
}

fn noise_sweep_cmd(a: NoiseSweepArgs) -> CliResult<()> {
    let mut cfg = run_config(&a.run)?;
    if let Some(f) = &a.fractions {
        cfg.run.fractions = parse_numbers(f, "noise fractions")?;
    }
    let p = prepare(cfg)?;
    let curve = noise_sweep(&p.initial, p.data(), &p.test, &p.cfg.train, &p.cfg.run.fractions, a.jobs)?;
    let csv = render_curve_csv(&curve);
    write_text(&a.out, &csv)?;
    write_manifest(&a.out, &p.cfg, "noise-sweep")?;
    print!("{csv}");
    Ok(())
}

fn pretrain_cmd(a: PretrainArgs) -> CliResult<()> {
    let mut cfg = base_config(a.encoder_config.as_deref())?;
    set(&mut cfg.run.data, a.data);
    set(&mut cfg.run.tokens, a.tokens);
    require(&cfg.run.data, "data")?;
    cfg.validate()?;
    cfg.run.check_paths()?;
    let corpus = load_surrogate(cfg.run.data.as_ref().expect("checked"))?;
    let tok = match &cfg.run.tokens {
        Some(path) => Tokenizer::from_file(path, cfg.run.max_len)?,
        None => corpus_tokenizer(corpus.docs.iter().map(|d| d.text.as_str()), cfg.run.max_len)?,
    };
    let arch = cfg.encoder_arch(tok.vocab_size());
    let outcome = pretrain::<f32>(&arch, &corpus, &tok, &cfg.pretrain_config())?;
    let meta = json!({
        "max_len": tok.max_len(),
        "tokens": token_list(&tok),
        "source_labels": corpus.labels.len(),
        "loss": outcome.loss,
    });
    checkpoint::save_encoder(&arch, &outcome.params, &a.out, meta)?;
    write_manifest(&a.out, &cfg, "pretrain")?;
    println!(
        "pretrained on {} documents, {} tags; loss {:.4} -> {:.4}",
        corpus.docs.len(),
        corpus.labels.len(),
        outcome.loss.first().copied().unwrap_or(f64::NAN),
        outcome.loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn stats_cmd(a: StatsArgs) -> CliResult<()> {
    let vocab = load_vocabulary(&a.vocab)?;
    let dataset = load_dataset(&a.data, &vocab)?;
    let stats = dataset_stats(&dataset);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
        return Ok(());
    }
    println!("documents\t{}", stats.documents);
    for (aspect, n) in stats.annotations.iter() {
        println!(
            "{aspect}\t{n} annotations\t{} distinct labels\t{} in vocabulary",
            stats.distinct[aspect],
            vocab.size(aspect)
        );
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> CliResult<()> {
    let mut rows = Vec::with_capacity(a.inputs.len());
    for path in &a.inputs {
        let text = fs::read_to_string(path).map_err(|e| io_error(format!("reading {}", path.display()), e))?;
        let report = parse_csv(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push((name, report));
    }
    if let Some(names) = &a.names {
        let names: Vec<&str> = names.split(',').map(str::trim).collect();
        if names.len() != rows.len() {
            return Err(usage(format!("{} names for {} reports", names.len(), rows.len())));
        }
        for (row, name) in rows.iter_mut().zip(names) {
            row.0 = name.to_string();
        }
    }
    let text = match (a.format, rows.len()) {
        (Format::Csv, 1) => render_csv(&rows[0].1),
        (Format::Csv, _) => return Err(usage("csv output takes exactly one report")),
        (Format::Table, n) => render_grid(&rows, n > 1),
    };
    match &a.out {
        Some(out) => write_text(out, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
