//! Generation records, annotated examples and dataset statistics.
//!
//! Both input files are JSONL. Loading is strict and stops at the first
//! problem; [`validate_records`] and [`validate_annotations`] instead collect
//! every problem with its 1-based line number.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::citescreen::normalize_key;
use crate::taxonomy::{parse_label_list, GapLabelSet, Label, LabelError, PerLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub cite_key: String,
    pub text: String,
}

/// One retrieval-augmented next-paragraph generation instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub record_id: String,
    pub model_name: String,
    pub previous_text: String,
    pub generation: String,
    pub target: String,
    pub required_citations: Vec<String>,
    pub references: Vec<Reference>,
}

impl GenerationRecord {
    /// Required citations that have no matching reference key.
    pub fn unreferenced_citations(&self) -> Vec<&str> {
        let keys: BTreeSet<String> = self
            .references
            .iter()
            .map(|r| normalize_key(&r.cite_key))
            .collect();
        self.required_citations
            .iter()
            .filter(|c| !keys.contains(&normalize_key(c)))
            .map(String::as_str)
            .collect()
    }
}

/// An expert label for one record.
///
/// The annotations file carries `record_id`; the full record is embedded
/// when the file was exported by the annotation service, and can otherwise
/// be attached from a records file with [`attach_records`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub record_id: String,
    #[serde(rename = "label")]
    pub gold: GapLabelSet,
    pub explanation: String,
    pub annotator_id: String,
    pub annotated_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<GenerationRecord>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate record_id {record_id:?} (first seen on line {first_line})")]
    Duplicate {
        line: usize,
        record_id: String,
        first_line: usize,
    },
    #[error("line {line}: required citation {citation:?} has no matching reference in record {record_id:?}")]
    MissingReference {
        line: usize,
        record_id: String,
        citation: String,
    },
    #[error("line {line}: invalid label: {source}")]
    Label {
        line: usize,
        #[source]
        source: LabelError,
    },
    #[error("line {line}: record_id {record_id:?} is not in the records file")]
    UnknownRecord { line: usize, record_id: String },
    #[error("annotation for {0:?} has no record text attached")]
    RecordNotAttached(String),
    #[error("no examples")]
    Empty,
    #[error("demonstration count {k} outside 1..={available}")]
    DemoCount { k: usize, available: usize },
}

impl CorpusError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Malformed { line, .. }
            | CorpusError::Schema { line, .. }
            | CorpusError::Duplicate { line, .. }
            | CorpusError::MissingReference { line, .. }
            | CorpusError::Label { line, .. }
            | CorpusError::UnknownRecord { line, .. } => Some(*line),
            _ => None,
        }
    }

    /// Stable short name for diagnostics output.
    pub fn kind(&self) -> &'static str {
        match self {
            CorpusError::Io(_) => "io",
            CorpusError::Malformed { .. } => "malformed-json",
            CorpusError::Schema { .. } => "schema",
            CorpusError::Duplicate { .. } => "duplicate-id",
            CorpusError::MissingReference { .. } => "missing-reference",
            CorpusError::Label {
                source: LabelError::Exclusivity,
                ..
            } => "label-exclusivity",
            CorpusError::Label { .. } => "label",
            CorpusError::UnknownRecord { .. } => "unknown-record",
            CorpusError::RecordNotAttached(_) => "record-not-attached",
            CorpusError::Empty => "empty",
            CorpusError::DemoCount { .. } => "demo-count",
        }
    }
}

/// Iterates non-blank lines as parsed JSON values, tagged with line numbers.
fn json_lines<R: BufRead>(
    source: R,
) -> impl Iterator<Item = Result<(usize, serde_json::Value), CorpusError>> {
    source.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(CorpusError::Io(e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(serde_json::from_str(&l).map(|v| (line_no, v)).map_err(|e| {
                CorpusError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                }
            })),
        }
    })
}

fn parse_record(line: usize, value: serde_json::Value) -> Result<GenerationRecord, CorpusError> {
    let record: GenerationRecord =
        serde_json::from_value(value).map_err(|e| CorpusError::Schema {
            line,
            message: e.to_string(),
        })?;
    check_record(line, &record)?;
    Ok(record)
}

fn check_record(line: usize, record: &GenerationRecord) -> Result<(), CorpusError> {
    if record.record_id.trim().is_empty() {
        return Err(CorpusError::Schema {
            line,
            message: "record_id is empty".into(),
        });
    }
    if let Some(c) = record.unreferenced_citations().first() {
        return Err(CorpusError::MissingReference {
            line,
            record_id: record.record_id.clone(),
            citation: c.to_string(),
        });
    }
    Ok(())
}

#[derive(Deserialize)]
struct AnnotationLine {
    record_id: String,
    label: Vec<i64>,
    explanation: String,
    annotator_id: String,
    annotated_at: DateTime<Utc>,
    #[serde(default)]
    record: Option<GenerationRecord>,
}

fn parse_annotation(
    line: usize,
    value: serde_json::Value,
) -> Result<AnnotatedExample, CorpusError> {
    let raw: AnnotationLine = serde_json::from_value(value).map_err(|e| CorpusError::Schema {
        line,
        message: e.to_string(),
    })?;
    let gold =
        parse_label_list(&raw.label).map_err(|source| CorpusError::Label { line, source })?;
    if let Some(r) = &raw.record {
        if r.record_id != raw.record_id {
            return Err(CorpusError::Schema {
                line,
                message: format!(
                    "embedded record id {:?} differs from record_id {:?}",
                    r.record_id, raw.record_id
                ),
            });
        }
        check_record(line, r)?;
    }
    Ok(AnnotatedExample {
        record_id: raw.record_id,
        gold,
        explanation: raw.explanation,
        annotator_id: raw.annotator_id,
        annotated_at: raw.annotated_at,
        record: raw.record,
    })
}

fn collect<R, T>(
    source: R,
    parse: fn(usize, serde_json::Value) -> Result<T, CorpusError>,
    key: fn(&T) -> String,
    id: fn(&T) -> &str,
) -> (Vec<T>, Vec<CorpusError>)
where
    R: BufRead,
{
    let mut items = Vec::new();
    let mut errors = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for entry in json_lines(source) {
        let parsed = entry.and_then(|(line, v)| parse(line, v).map(|t| (line, t)));
        match parsed {
            Ok((line, item)) => {
                if let Some(&first_line) = seen.get(&key(&item)) {
                    errors.push(CorpusError::Duplicate {
                        line,
                        record_id: id(&item).to_owned(),
                        first_line,
                    });
                } else {
                    seen.insert(key(&item), line);
                    items.push(item);
                }
            }
            Err(e) => errors.push(e),
        }
    }
    (items, errors)
}

/// Parses every line, returning valid records plus all diagnostics.
pub fn validate_records<R: BufRead>(source: R) -> (Vec<GenerationRecord>, Vec<CorpusError>) {
    collect(
        source,
        parse_record,
        |r| r.record_id.clone(),
        |r| &r.record_id,
    )
}

/// Annotations are unique per (record_id, annotator_id).
pub fn validate_annotations<R: BufRead>(source: R) -> (Vec<AnnotatedExample>, Vec<CorpusError>) {
    collect(
        source,
        parse_annotation,
        |a| format!("{}\u{0}{}", a.record_id, a.annotator_id),
        |a| &a.record_id,
    )
}

pub fn load_records<R: BufRead>(source: R) -> Result<Vec<GenerationRecord>, CorpusError> {
    let (records, mut errors) = validate_records(source);
    match errors.is_empty() {
        true => Ok(records),
        false => Err(errors.swap_remove(0)),
    }
}

pub fn load_annotations<R: BufRead>(source: R) -> Result<Vec<AnnotatedExample>, CorpusError> {
    let (examples, mut errors) = validate_annotations(source);
    match errors.is_empty() {
        true => Ok(examples),
        false => Err(errors.swap_remove(0)),
    }
}

/// Fills in `record` for annotations that lack an embedded copy.
pub fn attach_records(
    examples: &mut [AnnotatedExample],
    records: &[GenerationRecord],
) -> Result<(), CorpusError> {
    let by_id: HashMap<&str, &GenerationRecord> =
        records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    for ex in examples.iter_mut().filter(|e| e.record.is_none()) {
        match by_id.get(ex.record_id.as_str()) {
            Some(r) => ex.record = Some((*r).clone()),
            None => return Err(CorpusError::RecordNotAttached(ex.record_id.clone())),
        }
    }
    Ok(())
}

pub fn write_jsonl<W: std::io::Write, T: Serialize>(
    mut out: W,
    items: &[T],
) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_examples: usize,
    pub n_label_instances: usize,
    pub label_counts: PerLabel<usize>,
    pub label_distribution: PerLabel<f64>,
    pub balance: f64,
}

impl DatasetStats {
    /// Statistics from raw per-label instance counts.
    pub fn from_counts(n_examples: usize, label_counts: PerLabel<usize>) -> Option<Self> {
        let total: usize = label_counts.iter().map(|(_, c)| *c).sum();
        if total == 0 {
            return None;
        }
        let label_distribution = PerLabel::from_fn(|l| label_counts[l] as f64 / total as f64);
        let dist: Vec<f64> = label_distribution.iter().map(|(_, p)| *p).collect();
        Some(DatasetStats {
            n_examples,
            n_label_instances: total,
            label_counts,
            label_distribution,
            balance: balance(&dist),
        })
    }
}

/// Proportion of each label among all label instances (not examples).
pub fn label_distribution(examples: &[AnnotatedExample]) -> Result<DatasetStats, CorpusError> {
    let mut counts = PerLabel::<usize>::default();
    for ex in examples {
        for l in ex.gold.labels() {
            counts[l] += 1;
        }
    }
    DatasetStats::from_counts(examples.len(), counts).ok_or(CorpusError::Empty)
}

pub fn dataset_balance(stats: &DatasetStats) -> f64 {
    let dist: Vec<f64> = Label::ALL
        .iter()
        .map(|&l| stats.label_distribution[l])
        .collect();
    balance(&dist)
}

/// Entropy of `dist` over the entropy of the uniform distribution on the
/// same number of categories. Zero-mass categories count toward the
/// denominator.
pub fn balance(dist: &[f64]) -> f64 {
    if dist.len() < 2 {
        return 0.0;
    }
    let entropy: f64 = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    (entropy / (dist.len() as f64).ln()).clamp(0.0, 1.0)
}

/// The first `k` training examples in file order.
pub fn select_demonstrations(
    train: &[AnnotatedExample],
    k: usize,
) -> Result<&[AnnotatedExample], CorpusError> {
    if k == 0 || k > train.len() {
        return Err(CorpusError::DemoCount {
            k,
            available: train.len(),
        });
    }
    Ok(&train[..k])
}
