//! Append-only annotation log.
//!
//! Every submission is one JSON line. A resubmission for the same
//! `(annotator_id, record_id)` pair points at the event it supersedes, so the
//! log doubles as the audit trail. Current state is always the replay of the
//! log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use gapcheck_core::corpus::{
    label_distribution, write_jsonl, AnnotatedExample, DatasetStats, GenerationRecord,
};
use gapcheck_core::taxonomy::{parse_label_list, LabelError, PerLabel};

pub const LOG_FILE: &str = "annotations.log.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("log I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("invalid label: {0}")]
    Label(#[from] LabelError),
    #[error("an explanation is required when a gap label (1, 2 or 3) is chosen")]
    MissingExplanation,
    #[error("annotator_id is empty")]
    MissingAnnotator,
    #[error("no annotations stored")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Submit,
    Resubmit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub records_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<u64>,
    pub annotation: AnnotatedExample,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub seq: u64,
    pub annotation: AnnotatedExample,
}

/// Live annotations keyed by `(annotator_id, record_id)`.
pub type State = BTreeMap<(String, String), Entry>;

/// Folds events for `digest` into the current state; later events win.
pub fn replay<'a, I: IntoIterator<Item = &'a Event>>(events: I, digest: &str) -> State {
    let mut state = State::new();
    for e in events.into_iter().filter(|e| e.records_digest == digest) {
        let key = (
            e.annotation.annotator_id.clone(),
            e.annotation.record_id.clone(),
        );
        state.insert(
            key,
            Entry {
                seq: e.seq,
                annotation: e.annotation.clone(),
            },
        );
    }
    state
}

pub fn read_log(path: &Path) -> Result<Vec<Event>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(events)
}

pub fn records_digest(records: &[GenerationRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r).expect("records serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
    pub counts: PerLabel<usize>,
    pub distribution: PerLabel<f64>,
    pub balance: f64,
}

struct Writer {
    file: File,
    next_seq: u64,
}

pub struct Store {
    log_path: PathBuf,
    records: Vec<GenerationRecord>,
    index: HashMap<String, usize>,
    digest: String,
    state: RwLock<State>,
    writer: Mutex<Writer>,
}

impl Store {
    /// Opens (or creates) the log under `data_dir` and replays it.
    pub fn open(data_dir: &Path, records: Vec<GenerationRecord>) -> Result<Self, StoreError> {
        fs::create_dir_all(data_dir)?;
        let log_path = data_dir.join(LOG_FILE);
        let events = read_log(&log_path)?;
        let digest = records_digest(&records);
        let state = replay(&events, &digest);
        let ignored = events.iter().filter(|e| e.records_digest != digest).count();
        if ignored > 0 {
            tracing::warn!(
                ignored,
                "log events for a different records file are ignored"
            );
        }
        let next_seq = events.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)?;
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.record_id.clone(), i))
            .collect();
        Ok(Store {
            log_path,
            records,
            index,
            digest,
            state: RwLock::new(state),
            writer: Mutex::new(Writer { file, next_seq }),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> Option<&GenerationRecord> {
        self.records.get(index)
    }

    pub fn state(&self) -> State {
        self.state.read().unwrap().clone()
    }

    /// Index of the first record `annotator_id` has not labeled, or the
    /// dataset size when every record is labeled.
    pub fn cursor(&self, annotator_id: &str) -> usize {
        let state = self.state.read().unwrap();
        self.records
            .iter()
            .position(|r| !state.contains_key(&(annotator_id.to_owned(), r.record_id.clone())))
            .unwrap_or(self.records.len())
    }

    pub fn completed(&self, annotator_id: &str) -> usize {
        self.state
            .read()
            .unwrap()
            .keys()
            .filter(|(a, _)| a == annotator_id)
            .count()
    }

    /// Validates and appends one annotation. The log line is flushed before
    /// the in-memory state changes.
    pub fn submit(
        &self,
        annotator_id: &str,
        record_id: &str,
        labels: &[i64],
        explanation: &str,
        at: DateTime<Utc>,
    ) -> Result<Event, StoreError> {
        if annotator_id.trim().is_empty() {
            return Err(StoreError::MissingAnnotator);
        }
        if !self.index.contains_key(record_id) {
            return Err(StoreError::UnknownRecord(record_id.to_owned()));
        }
        let gold = parse_label_list(labels)?;
        if gold.has_gap() && explanation.trim().is_empty() {
            return Err(StoreError::MissingExplanation);
        }
        let mut writer = self.writer.lock().unwrap();
        let key = (annotator_id.to_owned(), record_id.to_owned());
        let previous = self.state.read().unwrap().get(&key).map(|e| e.seq);
        let event = Event {
            seq: writer.next_seq,
            kind: match previous {
                Some(_) => EventKind::Resubmit,
                None => EventKind::Submit,
            },
            records_digest: self.digest.clone(),
            supersedes: previous,
            annotation: AnnotatedExample {
                record_id: record_id.to_owned(),
                gold,
                explanation: explanation.to_owned(),
                annotator_id: annotator_id.to_owned(),
                annotated_at: at,
                record: None,
            },
        };
        let mut line = serde_json::to_vec(&event).expect("events serialize");
        line.push(b'\n');
        writer.file.write_all(&line)?;
        writer.file.flush()?;
        writer.next_seq += 1;
        self.state.write().unwrap().insert(
            key,
            Entry {
                seq: event.seq,
                annotation: event.annotation.clone(),
            },
        );
        Ok(event)
    }

    /// Current annotations in dataset order, then by annotator.
    pub fn annotations(
        &self,
        annotator_id: Option<&str>,
        embed_records: bool,
    ) -> Vec<AnnotatedExample> {
        let state = self.state.read().unwrap();
        let mut out: Vec<AnnotatedExample> = state
            .values()
            .filter(|e| annotator_id.is_none_or(|a| e.annotation.annotator_id == a))
            .map(|e| e.annotation.clone())
            .collect();
        out.sort_by(|a, b| {
            (self.index[&a.record_id], &a.annotator_id)
                .cmp(&(self.index[&b.record_id], &b.annotator_id))
        });
        if embed_records {
            for a in &mut out {
                a.record = Some(self.records[self.index[&a.record_id]].clone());
            }
        }
        out
    }

    /// Annotations file contents in the corpus annotations schema.
    pub fn export(
        &self,
        annotator_id: Option<&str>,
        embed_records: bool,
    ) -> Result<Vec<u8>, StoreError> {
        let items = self.annotations(annotator_id, embed_records);
        if items.is_empty() {
            return Err(StoreError::Empty);
        }
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &items)?;
        Ok(buf)
    }

    pub fn progress(&self, annotator_id: Option<&str>) -> Progress {
        let items = self.annotations(annotator_id, false);
        let total = match annotator_id {
            Some(_) => self.records.len(),
            None => self.records.len() * self.annotator_count().max(1),
        };
        match label_distribution(&items) {
            Ok(DatasetStats {
                label_counts,
                label_distribution,
                balance,
                ..
            }) => Progress {
                completed: items.len(),
                total,
                counts: label_counts,
                distribution: label_distribution,
                balance,
            },
            Err(_) => Progress {
                completed: 0,
                total,
                counts: PerLabel::default(),
                distribution: PerLabel::default(),
                balance: 0.0,
            },
        }
    }

    fn annotator_count(&self) -> usize {
        let state = self.state.read().unwrap();
        let mut ids: Vec<&str> = state.keys().map(|(a, _)| a.as_str()).collect();
        ids.dedup();
        ids.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gapcheck_core::corpus::{load_annotations, Reference};
    use gapcheck_core::taxonomy::Label;

    fn records(n: usize) -> Vec<GenerationRecord> {
        (0..n)
            .map(|i| GenerationRecord {
                record_id: format!("r{i}"),
                model_name: "m".into(),
                previous_text: "p".into(),
                generation: "In 440 U.S. 48, 55 the Court held.".into(),
                target: "t".into(),
                required_citations: vec!["440 U.S. 48".into()],
                references: vec![Reference {
                    cite_key: "440 U.S. 48".into(),
                    text: "x".into(),
                }],
            })
            .collect()
    }

    fn now() -> DateTime<Utc> {
        "2024-06-01T10:00:00Z".parse().unwrap()
    }

    #[test]
    fn cursor_advances_and_exhausts() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), records(3)).unwrap();
        assert_eq!(store.cursor("a"), 0);
        store
            .submit("a", "r0", &[2], "chain vs parallel", now())
            .unwrap();
        assert_eq!(store.cursor("a"), 1);
        assert_eq!(store.cursor("b"), 0);
        store.submit("a", "r1", &[0], "", now()).unwrap();
        store.submit("a", "r2", &[1, 3], "x", now()).unwrap();
        assert_eq!(store.cursor("a"), 3);
        assert_eq!(store.completed("a"), 3);
    }

    #[test]
    fn validation_rules() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), records(1)).unwrap();
        assert!(matches!(
            store.submit("a", "r0", &[0, 3], "x", now()),
            Err(StoreError::Label(LabelError::Exclusivity))
        ));
        assert!(matches!(
            store.submit("a", "r0", &[3], "  ", now()),
            Err(StoreError::MissingExplanation)
        ));
        assert!(matches!(
            store.submit("a", "zz", &[0], "", now()),
            Err(StoreError::UnknownRecord(_))
        ));
        assert!(matches!(store.export(None, false), Err(StoreError::Empty)));
        assert_eq!(store.progress(None).completed, 0);
    }

    #[test]
    fn resubmit_supersedes_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path(), records(2)).unwrap();
            store.submit("a", "r0", &[2], "first", now()).unwrap();
            let e = store.submit("a", "r0", &[1, 2], "second", now()).unwrap();
            assert_eq!(e.kind, EventKind::Resubmit);
            assert_eq!(e.supersedes, Some(0));
        }
        let store = Store::open(dir.path(), records(2)).unwrap();
        let items = store.annotations(None, false);
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].explanation, "second");
        assert_eq!(read_log(store.log_path()).unwrap().len(), 2);
        let e = store.submit("a", "r1", &[0], "", now()).unwrap();
        assert_eq!(e.seq, 2);
    }

    #[test]
    fn export_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), records(2)).unwrap();
        store.submit("b", "r1", &[3], "y", now()).unwrap();
        store.submit("a", "r0", &[2], "x", now()).unwrap();
        let bytes = store.export(None, false).unwrap();
        let loaded = load_annotations(bytes.as_slice()).unwrap();
        assert_eq!(loaded, store.annotations(None, false));
        assert_eq!(loaded[0].record_id, "r0");
        let embedded = load_annotations(store.export(Some("a"), true).unwrap().as_slice()).unwrap();
        assert_eq!(embedded.len(), 1);
        assert!(embedded[0].record.is_some());
    }

    #[test]
    fn single_label_progress() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), records(2)).unwrap();
        store.submit("a", "r0", &[2], "x", now()).unwrap();
        let p = store.progress(Some("a"));
        assert_eq!(p.completed, 1);
        assert_eq!(p.total, 2);
        assert_eq!(p.distribution[Label::TargetMismatch], 1.0);
        assert_eq!(p.distribution[Label::Intrinsic], 0.0);
    }

    #[test]
    fn other_digest_events_ignored() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path(), records(2)).unwrap();
            store.submit("a", "r0", &[2], "x", now()).unwrap();
        }
        let store = Store::open(dir.path(), records(3)).unwrap();
        assert!(store.annotations(None, false).is_empty());
        assert_eq!(store.submit("a", "r0", &[0], "", now()).unwrap().seq, 1);
    }
}
