use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use specdet_core::classifiers::{ClassifierKind, Dataset, FeatureSchema, Input, ModelArtifact, TrainConfig};
use specdet_core::corpus::{ingest_gadget_dir, preprocess, split_functions, tokenize, CorpusManifest};
use specdet_core::cps::{self, derive_features, parse_trace, save_trace, synth_trace, LiveConfig, SynthConfig, TRACE_HEADER};
use specdet_core::embedding::{build_vocab, encode_sequence, pool_features, train_skipgram, EmbeddingConfig, EmbeddingMatrix};
use specdet_core::eval::{self, markdown_report, metrics_csv, roc_csv, EvalConfig, Evaluation, KFoldSpec};

use crate::args::*;
use crate::verdict::{aggregate_by_pid, write_verdicts, Verdict};
use crate::Failure;

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    let seed = cli.seed;
    match &cli.command {
        Command::IngestGadgets(a) => ingest(a),
        Command::TrainEmbedding(a) => train_embedding(a, seed),
        Command::Encode(a) => encode(a),
        Command::Train(a) => train(a, seed),
        Command::Scan(a) => scan(a),
        Command::Detect(a) => detect(a),
        Command::Collect(a) => collect(a),
        Command::Synth(a) => synth(a, seed),
        Command::Evaluate(a) => evaluate(a, seed),
    }
}

fn kind(k: Kind) -> ClassifierKind {
    match k {
        Kind::Cnn => ClassifierKind::Cnn,
        Kind::Nb => ClassifierKind::Nb,
        Kind::Svc => ClassifierKind::Svc,
        Kind::Lr => ClassifierKind::Lr,
        Kind::Rf => ClassifierKind::Rf,
    }
}

fn check_threshold(t: f64) -> Outcome {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--threshold must be in [0, 1], got {t}")))
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn ingest(a: &IngestArgs) -> Outcome {
    let got = ingest_gadget_dir(&a.dir, a.label)?;
    for w in &got.log.warnings {
        warn!("{w}");
    }
    let mut manifest = if a.append && a.out.exists() {
        CorpusManifest::load(&a.out)?
    } else {
        CorpusManifest::new()
    };
    let added = got.records.len();
    manifest.extend(got.records)?;
    manifest.save(&a.out)?;
    info!("ingested {added} gadgets with label {}; manifest holds {}", a.label, manifest.len());
    Ok(())
}

fn train_embedding(a: &TrainEmbeddingArgs, seed: u64) -> Outcome {
    let config = EmbeddingConfig {
        dim: a.dim,
        maxlen: a.maxlen,
        window: a.window,
        negatives: a.negatives,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        min_count: a.min_count,
        seed,
    };
    config.validate()?;
    let corpus = CorpusManifest::load(&a.corpus)?;
    let vocab = build_vocab(&corpus, a.min_count)?;
    let trained = train_skipgram(&corpus, &vocab, &config)?;
    trained.embedding.save(&a.out)?;
    if let (Some(first), Some(last)) = (trained.epoch_losses.first(), trained.epoch_losses.last()) {
        info!("vocabulary {} tokens; epoch loss {first:.4} -> {last:.4}", vocab.len());
    }
    Ok(())
}

fn encode(a: &EncodeArgs) -> Outcome {
    let corpus = CorpusManifest::load(&a.corpus)?;
    let embedding = EmbeddingMatrix::load(&a.embedding)?;
    let data = Dataset::from_gadgets(&corpus, &embedding, a.sequence)?;
    data.save(&a.out)?;
    info!("encoded {} gadgets as {}", data.len(), data.schema());
    Ok(())
}

fn is_trace(path: &Path) -> Result<bool, Failure> {
    let file = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| io_failure(path, e))?;
    let first = first.trim_end_matches(['\r', '\n']).trim_start_matches('\u{feff}');
    Ok(first == TRACE_HEADER.join(","))
}

/// Loads a features file or a labeled trace; the flag says which it was.
fn load_features(path: &Path) -> Result<(Dataset, bool), Failure> {
    if is_trace(path)? {
        let samples = parse_trace(path)?;
        Ok((Dataset::from_trace(&samples)?, true))
    } else {
        Ok((Dataset::load(path)?, false))
    }
}

fn train_config(seed: u64, standardize: Option<bool>, from_trace: bool) -> TrainConfig {
    TrainConfig::new(seed).with_standardize(standardize.unwrap_or(from_trace))
}

/// Classical models see sequences only after mean pooling.
fn data_for(kind: ClassifierKind, data: &Dataset) -> Option<Dataset> {
    match (kind.wants_sequences(), data.schema()) {
        (true, FeatureSchema::Sequence { .. }) | (false, FeatureSchema::Vector { .. }) => Some(data.clone()),
        (false, FeatureSchema::Sequence { .. }) => Some(data.pooled()),
        (true, FeatureSchema::Vector { .. }) => None,
    }
}

fn train(a: &TrainArgs, seed: u64) -> Outcome {
    let k = kind(a.classifier);
    let (data, from_trace) = load_features(&a.features)?;
    let data = data_for(k, &data).ok_or_else(|| {
        Failure::Data(format!(
            "{k} needs sequence features (encode with --sequence), found {}",
            data.schema()
        ))
    })?;
    let model = specdet_core::train(k, &data, &train_config(seed, a.standardize, from_trace))?;
    model.save(&a.out)?;
    info!("trained {k} on {} rows ({})", data.len(), data.schema());
    Ok(())
}

fn emit(verdicts: &[Verdict], out: Option<&PathBuf>) -> Outcome {
    let result = match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
            write_verdicts(verdicts, std::io::BufWriter::new(file))
        }
        None => write_verdicts(verdicts, std::io::stdout().lock()),
    };
    result.map_err(|e| Failure::Data(format!("writing verdicts: {e}")))
}

fn score_tokens(model: &ModelArtifact, embedding: &EmbeddingMatrix, tokens: &[String]) -> Result<f64, Failure> {
    let seq = encode_sequence(tokens, embedding);
    let score = match model.feature_schema {
        FeatureSchema::Sequence { .. } => model.predict_score(Input::Sequence(&seq)),
        FeatureSchema::Vector { .. } => model.predict_score(Input::Vector(&pool_features(&seq))),
    };
    score.map_err(|e| Failure::Data(format!("model does not fit this embedding: {e}")))
}

fn looks_like_manifest(path: &Path) -> Result<bool, Failure> {
    let text = fs::read(path).map_err(|e| io_failure(path, e))?;
    Ok(text.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{'))
}

fn scan(a: &ScanArgs) -> Outcome {
    check_threshold(a.threshold)?;
    let model = ModelArtifact::load(&a.model)?;
    let embedding = EmbeddingMatrix::load(&a.embedding)?;
    let mut verdicts = Vec::new();
    if looks_like_manifest(&a.input)? {
        for r in CorpusManifest::load(&a.input)?.records() {
            let score = score_tokens(&model, &embedding, &r.tokens)?;
            verdicts.push(Verdict::new(r.id.clone(), score, a.threshold));
        }
    } else {
        let raw = fs::read_to_string(&a.input).map_err(|e| io_failure(&a.input, e))?;
        let fallback = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
        for (name, text) in split_functions(&raw, fallback) {
            let tokens = tokenize(&preprocess(&text));
            let score = score_tokens(&model, &embedding, &tokens)?;
            verdicts.push(Verdict::new(name, score, a.threshold));
        }
    }
    emit(&verdicts, a.out.as_ref())
}

fn detect(a: &DetectArgs) -> Outcome {
    check_threshold(a.threshold)?;
    let model = ModelArtifact::load(&a.model)?;
    let samples = parse_trace(&a.trace)?;
    let rows = derive_features(&samples);
    let mut verdicts = Vec::with_capacity(rows.len());
    for (s, row) in samples.iter().zip(&rows) {
        let score = model
            .predict_score(Input::Vector(&row.to_vector()))
            .map_err(|e| Failure::Data(format!("model is not a counter-trace model: {e}")))?;
        verdicts.push(Verdict::new(format!("{}:{}", s.pid, s.process_name), score, a.threshold));
    }
    if a.aggregate == Some(Aggregate::Pid) {
        let labeled: Vec<(u32, String, u8)> = samples
            .iter()
            .zip(&verdicts)
            .map(|(s, v)| (s.pid, s.process_name.clone(), v.label))
            .collect();
        verdicts = aggregate_by_pid(&labeled);
    }
    let flagged = verdicts.iter().filter(|v| v.label == 1).count();
    info!("{flagged} of {} verdicts flagged", verdicts.len());
    emit(&verdicts, a.out.as_ref())
}

fn collect(a: &CollectArgs) -> Outcome {
    if a.interval_us == 0 || a.duration_s == 0 {
        return Err(Failure::Usage("--interval-us and --duration-s must be positive".into()));
    }
    let config = LiveConfig {
        interval_us: a.interval_us,
        duration_s: a.duration_s,
        pids: a.pid.clone(),
    };
    let mut stream = cps::collect_live(&config)?;
    info!("monitoring {} processes", stream.monitored().len());
    let samples: Vec<_> = stream.by_ref().collect();
    let stats = stream.stats();
    if stats.overflow_drops() + stats.backpressure_drops() > 0 {
        warn!(
            "dropped {} samples on counter overflow and {} on backpressure",
            stats.overflow_drops(),
            stats.backpressure_drops()
        );
    }
    save_trace(&samples, &a.out)?;
    info!("wrote {} samples", samples.len());
    Ok(())
}

fn synth(a: &SynthArgs, seed: u64) -> Outcome {
    if a.interval_us == 0 {
        return Err(Failure::Usage("--interval-us must be positive".into()));
    }
    let config = SynthConfig::default()
        .with_counts(a.benign, a.attack)
        .with_seed(seed)
        .with_interval_us(a.interval_us);
    let samples = synth_trace(&config)?;
    save_trace(&samples, &a.out)?;
    info!("wrote {} benign and {} attack samples", a.benign, a.attack);
    Ok(())
}

fn csv_twin(report: &Path) -> PathBuf {
    if report.extension().is_some_and(|e| e == "csv") {
        report.with_extension("metrics.csv")
    } else {
        report.with_extension("csv")
    }
}

fn write_file(path: &Path, text: &str) -> Outcome {
    let mut f = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_failure(path, e))
}

fn evaluate(a: &EvaluateArgs, seed: u64) -> Outcome {
    check_threshold(a.threshold)?;
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(Failure::Usage(format!("--beta must be positive, got {}", a.beta)));
    }
    if !a.no_cv && a.kfold < 2 {
        return Err(Failure::Usage(format!("--kfold must be at least 2, got {}", a.kfold)));
    }
    let kinds: Vec<ClassifierKind> = match a.classifier {
        KindOrAll::All => ClassifierKind::ALL.to_vec(),
        KindOrAll::Cnn => vec![ClassifierKind::Cnn],
        KindOrAll::Nb => vec![ClassifierKind::Nb],
        KindOrAll::Svc => vec![ClassifierKind::Svc],
        KindOrAll::Lr => vec![ClassifierKind::Lr],
        KindOrAll::Rf => vec![ClassifierKind::Rf],
    };
    let (data, from_trace) = load_features(&a.features)?;
    let mut config = EvalConfig::new(seed);
    config.split = config.split.with_stratify(!a.no_stratify);
    config.kfold = (!a.no_cv).then(|| KFoldSpec::new(a.kfold, seed));
    config.train = train_config(seed, a.standardize, from_trace);
    config.beta = a.beta;
    config.threshold = a.threshold;

    let mut results: Vec<Evaluation> = Vec::new();
    for k in kinds {
        let Some(d) = data_for(k, &data) else {
            if a.classifier == KindOrAll::All {
                warn!("skipping {k}: it needs sequence features, found {}", data.schema());
                continue;
            }
            return Err(Failure::Data(format!(
                "{k} needs sequence features (encode with --sequence), found {}",
                data.schema()
            )));
        };
        info!("evaluating {k} on {} rows", d.len());
        results.push(eval::evaluate(k, &d, &config)?);
    }

    let rows: Vec<_> = results.iter().map(Evaluation::row).collect();
    let title = a
        .features
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_file(&a.report, &markdown_report(&title, &rows))?;
    write_file(&csv_twin(&a.report), &metrics_csv(&rows))?;

    if let Some(path) = &a.roc {
        let mut text = String::new();
        let many = results.len() > 1;
        for e in &results {
            let Some(curve) = &e.roc else {
                warn!("{}: no ROC, the test partition holds one class", e.kind);
                continue;
            };
            if many {
                text.push_str(&format!("classifier,{}\n", e.kind));
            }
            text.push_str(&roc_csv(curve));
        }
        write_file(path, &text)?;
    }
    for e in &results {
        info!(
            "{}: test F1 {:.3}, AUC {}",
            e.kind,
            e.test.f1,
            e.test.auc.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
        );
    }
    Ok(())
}
