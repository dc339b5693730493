use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use gapcheck_core::citescreen::{
    coverage, screen as screen_record, CoverageReport, ScreenConfig, ScreeningSignals,
};
use gapcheck_core::corpus::{
    attach_records, label_distribution, load_annotations, load_records, validate_annotations,
    validate_records, write_jsonl, AnnotatedExample, CorpusError, GenerationRecord,
};
use gapcheck_core::detector::{
    detect_batch, evaluate_results, join_gold, oracle_echo_script, run_ablation, ChatBackend,
    DetectionResult, DetectorConfig, DetectorError, HttpBackend, MockBackend, MAX_DEMONSTRATIONS,
};
use gapcheck_core::metrics::{error_analysis, rouge_summary, MetricsReport};

use crate::manifest::ManifestBuilder;
use crate::tables;
use crate::{
    AblateArgs, CliError, DetectArgs, DetectorFlags, ErrorsArgs, EvaluateArgs, MockScriptArgs,
    ScreenArgs, StatsArgs, ValidateArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn corpus_err(path: &Path, e: CorpusError) -> CliError {
    match e {
        CorpusError::Io(e) => CliError::Config(format!("cannot read {}: {e}", path.display())),
        e => CliError::Validation(format!("{}: {e}", path.display())),
    }
}

fn detector_err(e: DetectorError) -> CliError {
    match e {
        DetectorError::Config(m) => CliError::Config(m),
        e => CliError::Validation(e.to_string()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("cannot write {}: {e}", path.display()))
}

fn read_records(path: &Path) -> Result<Vec<GenerationRecord>> {
    load_records(open(path)?).map_err(|e| corpus_err(path, e))
}

fn read_annotations(path: &Path) -> Result<Vec<AnnotatedExample>> {
    load_annotations(open(path)?).map_err(|e| corpus_err(path, e))
}

fn read_results(path: &Path) -> Result<Vec<DetectionResult>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn write_out(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body).map_err(io_err(p)),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| CliError::Config(format!("stdout: {e}"))),
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    format!(
        "{}\n",
        serde_json::to_string_pretty(value).expect("reports serialize")
    )
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).expect("in-memory write");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Registers inputs and the optional output, then writes the sidecar.
fn finish_manifest(
    mut m: ManifestBuilder,
    inputs: &[Option<&Path>],
    outputs: &[Option<&Path>],
) -> Result<()> {
    if outputs.iter().all(Option::is_none) {
        return Ok(());
    }
    for p in inputs.iter().flatten() {
        m.input(p)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    }
    for p in outputs.iter().flatten() {
        m.output(p);
    }
    m.finish()
        .map_err(|e| CliError::Config(format!("manifest: {e}")))
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    if args.records.is_none() && args.annotations.is_none() {
        return Err(CliError::Config(
            "nothing to validate: pass --records and/or --annotations".into(),
        ));
    }
    let mut problems = Vec::new();
    let mut known: Option<HashSet<String>> = None;
    if let Some(path) = &args.records {
        let (records, errors) = validate_records(open(path)?);
        for e in errors {
            problems.push(diagnostic(path, &e));
        }
        println!("{}: {} valid records", path.display(), records.len());
        known = Some(records.into_iter().map(|r| r.record_id).collect());
    }
    if let Some(path) = &args.annotations {
        let (examples, errors) = validate_annotations(open(path)?);
        for e in errors {
            problems.push(diagnostic(path, &e));
        }
        if let Some(known) = &known {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(e.to_string()))?;
            let lines: HashMap<String, usize> = text
                .lines()
                .enumerate()
                .filter_map(|(i, l)| {
                    let v: serde_json::Value = serde_json::from_str(l).ok()?;
                    Some((v.get("record_id")?.as_str()?.to_owned(), i + 1))
                })
                .collect();
            for ex in examples
                .iter()
                .filter(|e| e.record.is_none() && !known.contains(&e.record_id))
            {
                let e = CorpusError::UnknownRecord {
                    line: lines.get(&ex.record_id).copied().unwrap_or(0),
                    record_id: ex.record_id.clone(),
                };
                problems.push(diagnostic(path, &e));
            }
        }
        println!("{}: {} valid annotations", path.display(), examples.len());
    }
    for p in &problems {
        println!("{p}");
    }
    match problems.len() {
        0 => Ok(()),
        n => Err(CliError::Validation(format!("{n} problem(s) found"))),
    }
}

fn diagnostic(path: &Path, e: &CorpusError) -> String {
    match e.line() {
        Some(line) => format!("{}:{line}: [{}] {e}", path.display(), e.kind()),
        None => format!("{}: [{}] {e}", path.display(), e.kind()),
    }
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let examples = read_annotations(&args.annotations)?;
    let stats = label_distribution(&examples).map_err(|e| corpus_err(&args.annotations, e))?;
    print!("{}", tables::stats_text(&stats));
    if let Some(out) = &args.out {
        write_out(Some(out), &pretty(&stats))?;
    }
    finish_manifest(
        ManifestBuilder::new("stats", json!({})),
        &[Some(&args.annotations)],
        &[args.out.as_deref()],
    )
}

#[derive(Serialize)]
struct ScreenLine {
    record_id: String,
    coverage: CoverageReport,
    signals: ScreeningSignals,
}

pub fn screen(args: &ScreenArgs) -> Result<()> {
    let records = read_records(&args.records)?;
    let config = ScreenConfig::default();
    let lines: Vec<ScreenLine> = records
        .iter()
        .map(|r| ScreenLine {
            record_id: r.record_id.clone(),
            coverage: coverage(r),
            signals: screen_record(r, &config),
        })
        .collect();
    write_out(args.out.as_deref(), &jsonl(&lines))?;
    finish_manifest(
        ManifestBuilder::new(
            "screen",
            json!({ "ngram": config.ngram, "min_words": config.min_words, "max_words": config.max_words }),
        ),
        &[Some(&args.records)],
        &[args.out.as_deref()],
    )
}

fn detector_config(flags: &DetectorFlags, k: usize) -> DetectorConfig {
    let defaults = DetectorConfig::default();
    DetectorConfig {
        endpoint_url: flags.endpoint.clone().unwrap_or(defaults.endpoint_url),
        model_name: flags.model.clone().unwrap_or(defaults.model_name),
        api_key_ref: flags.api_key_env.clone(),
        k_demonstrations: k,
        temperature: flags.temperature,
        max_retries: flags.max_retries,
        request_timeout: Duration::from_secs(flags.timeout_secs),
        parallelism: flags.parallelism,
        retry_backoff: Duration::from_millis(flags.retry_backoff_ms),
    }
}

fn backend(flags: &DetectorFlags, config: &DetectorConfig) -> Result<Box<dyn ChatBackend>> {
    if let Some(script) = &flags.mock {
        let mock = MockBackend::from_reader(open(script)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", script.display())))?;
        return Ok(Box::new(mock));
    }
    let key = std::env::var(&config.api_key_ref).map_err(|_| {
        CliError::Config(format!(
            "environment variable {} is not set (pass --mock for the scripted backend)",
            config.api_key_ref
        ))
    })?;
    Ok(Box::new(HttpBackend::new(
        config.endpoint_url.clone(),
        Some(key),
        config.request_timeout,
    )))
}

fn config_snapshot(config: &DetectorConfig, flags: &DetectorFlags) -> serde_json::Value {
    let mut v = serde_json::to_value(config).expect("config serializes");
    v["backend"] = match &flags.mock {
        Some(p) => json!({ "mock": p.display().to_string() }),
        None => json!("http"),
    };
    v
}

fn load_train(
    annotations: Option<&Path>,
    train_records: Option<&Path>,
) -> Result<Vec<AnnotatedExample>> {
    let Some(path) = annotations else {
        return Ok(Vec::new());
    };
    let mut train = read_annotations(path)?;
    if let Some(rp) = train_records {
        let records = read_records(rp)?;
        attach_records(&mut train, &records).map_err(|e| corpus_err(path, e))?;
    }
    Ok(train)
}

fn transport_failures(results: &[DetectionResult]) -> usize {
    results
        .iter()
        .filter(|r| r.is_failed() && r.transport_error.is_some())
        .count()
}

pub fn detect(args: &DetectArgs) -> Result<()> {
    let config = detector_config(&args.detector, args.k);
    config.validate().map_err(detector_err)?;
    let records = read_records(&args.records)?;
    let train = load_train(args.annotations.as_deref(), args.train_records.as_deref())?;
    if args.k > train.len() {
        return Err(CliError::Config(format!(
            "--k {} exceeds the {} available training annotations",
            args.k,
            train.len()
        )));
    }
    let backend = backend(&args.detector, &config)?;
    let results = detect_batch(&records, &config, &train[..args.k], backend.as_ref())
        .map_err(detector_err)?;
    write_out(args.out.as_deref(), &jsonl(&results))?;
    finish_manifest(
        ManifestBuilder::new("detect", config_snapshot(&config, &args.detector)),
        &[
            Some(&args.records),
            args.annotations.as_deref(),
            args.train_records.as_deref(),
            args.detector.mock.as_deref(),
        ],
        &[args.out.as_deref()],
    )?;
    let failed = results.iter().filter(|r| r.is_failed()).count();
    eprintln!("{} results, {} failed", results.len(), failed);
    match transport_failures(&results) {
        0 => Ok(()),
        n => Err(CliError::Transport(format!(
            "{n} record(s) exhausted retries on transport errors"
        ))),
    }
}

fn attach_rouge(
    report: &mut MetricsReport,
    results: &[DetectionResult],
    records: &[GenerationRecord],
) {
    let by_id: HashMap<&str, &GenerationRecord> =
        records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let pairs: Vec<(&str, &str)> = results
        .iter()
        .filter_map(|r| by_id.get(r.record_id.as_str()))
        .map(|r| (r.generation.as_str(), r.target.as_str()))
        .collect();
    report.rouge = rouge_summary(pairs);
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let results = read_results(&args.results)?;
    if results.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no results",
            args.results.display()
        )));
    }
    let gold = args.gold.as_deref().map(read_annotations).transpose()?;
    let mut report = evaluate_results(&results, gold.as_deref(), args.error_denominator.into())
        .map_err(detector_err)?
        .ok_or_else(|| CliError::Validation("every result failed to parse; no metrics".into()))?;
    if let Some(rp) = &args.records {
        attach_rouge(&mut report, &results, &read_records(rp)?);
    }
    write_out(args.out.as_deref(), &pretty(&report))?;
    if let Some(csv) = &args.csv {
        write_out(Some(csv), &tables::metrics_csv(&report))?;
    }
    finish_manifest(
        ManifestBuilder::new(
            "evaluate",
            json!({ "error_denominator": format!("{:?}", args.error_denominator).to_lowercase() }),
        ),
        &[
            Some(&args.results),
            args.gold.as_deref(),
            args.records.as_deref(),
        ],
        &[args.out.as_deref(), args.csv.as_deref()],
    )
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let config = detector_config(&args.detector, 0);
    config.validate().map_err(detector_err)?;
    let records = read_records(&args.records)?;
    let train = load_train(Some(&args.annotations), args.train_records.as_deref())?;
    if let Some(&k) = args
        .ks
        .iter()
        .find(|&&k| k > train.len() || k > MAX_DEMONSTRATIONS)
    {
        return Err(CliError::Config(format!(
            "k = {k} exceeds the {} available demonstrations",
            train.len().min(MAX_DEMONSTRATIONS)
        )));
    }
    let gold = args.gold.as_deref().map(read_annotations).transpose()?;
    let backend = backend(&args.detector, &config)?;
    let rows = run_ablation(
        &train,
        &records,
        gold.as_deref(),
        &config,
        &args.ks,
        backend.as_ref(),
    )
    .map_err(detector_err)?;
    write_out(args.out.as_deref(), &tables::ablation_csv(&rows))?;
    if let Some(p) = &args.json {
        write_out(Some(p), &pretty(&rows))?;
    }
    let mut snapshot = config_snapshot(&config, &args.detector);
    snapshot["ks"] = json!(args.ks);
    finish_manifest(
        ManifestBuilder::new("ablate", snapshot),
        &[
            Some(&args.records),
            Some(&args.annotations),
            args.train_records.as_deref(),
            args.gold.as_deref(),
            args.detector.mock.as_deref(),
        ],
        &[args.out.as_deref(), args.json.as_deref()],
    )
}

pub fn errors(args: &ErrorsArgs) -> Result<()> {
    let results = read_results(&args.results)?;
    let gold = read_annotations(&args.gold)?;
    let (outcomes, _failed) = join_gold(&results, &gold).map_err(detector_err)?;
    if outcomes.is_empty() {
        return Err(CliError::Validation("no parsed results to analyse".into()));
    }
    let table = error_analysis(&outcomes, args.error_denominator.into())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    write_out(args.out.as_deref(), &tables::errors_csv(&table))?;
    if let Some(p) = &args.json {
        write_out(Some(p), &pretty(&table))?;
    }
    finish_manifest(
        ManifestBuilder::new(
            "errors",
            json!({ "error_denominator": format!("{:?}", args.error_denominator).to_lowercase() }),
        ),
        &[Some(&args.results), Some(&args.gold)],
        &[args.out.as_deref(), args.json.as_deref()],
    )
}

pub fn mock_script(args: &MockScriptArgs) -> Result<()> {
    let records = read_records(&args.records)?;
    let gold = read_annotations(&args.gold)?;
    let script = oracle_echo_script(&records, &gold);
    write_out(Some(&args.out), &jsonl(&script))?;
    finish_manifest(
        ManifestBuilder::new("mock-script", json!({})),
        &[Some(&args.records), Some(&args.gold)],
        &[Some(&args.out)],
    )
}
