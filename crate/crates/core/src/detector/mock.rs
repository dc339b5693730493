//! Deterministic scripted backend.
//!
//! A script is JSONL, one entry per prompt digest:
//!
//! ```text
//! {"prompt_digest":"<sha256 of user prompt>","record_id":"r1","replies":[{"transport_error":"503"},{"content":"{\"label\":[2],\"explanation\":\"x\"}"}]}
//! ```
//!
//! The n-th call for a digest gets the n-th reply; the last reply repeats.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gateway::{prompt_digest, ChatBackend, ChatRequest, TransportError};
use super::prompt::build_user_prompt;
use super::response::render_output;
use crate::corpus::{AnnotatedExample, GenerationRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Content {
        content: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delay_ms: Option<u64>,
    },
    TransportError {
        transport_error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub prompt_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    pub replies: Vec<ScriptedReply>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("mock script line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Default)]
pub struct MockBackend {
    entries: HashMap<String, Vec<ScriptedReply>>,
    calls: Mutex<HashMap<String, usize>>,
}

impl MockBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        MockBackend {
            entries: entries
                .into_iter()
                .map(|e| (e.prompt_digest, e.replies))
                .collect(),
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_reader<R: BufRead>(source: R) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(&line).map_err(|e| ScriptError::Line {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if entry.replies.is_empty() {
                return Err(ScriptError::Line {
                    line: i + 1,
                    message: "replies is empty".into(),
                });
            }
            entries.push(entry);
        }
        Ok(MockBackend::new(entries))
    }

    /// Number of calls seen for a digest so far.
    pub fn calls_for(&self, digest: &str) -> usize {
        self.calls.lock().unwrap().get(digest).copied().unwrap_or(0)
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let digest = prompt_digest(&request.user);
        let Some(replies) = self.entries.get(&digest) else {
            return Err(TransportError::Unscripted(digest));
        };
        let n = {
            let mut calls = self.calls.lock().unwrap();
            let n = calls.entry(digest).or_insert(0);
            *n += 1;
            *n - 1
        };
        match &replies[n.min(replies.len() - 1)] {
            ScriptedReply::Content { content, delay_ms } => {
                if let Some(ms) = delay_ms {
                    std::thread::sleep(Duration::from_millis(*ms));
                }
                Ok(content.clone())
            }
            ScriptedReply::TransportError { transport_error } => {
                Err(TransportError::Scripted(transport_error.clone()))
            }
        }
    }
}

/// Script whose reply for each record is that record's gold label.
///
/// Records without gold are left out, so a detector run over them fails
/// at the transport layer.
pub fn oracle_echo_script(
    records: &[GenerationRecord],
    gold: &[AnnotatedExample],
) -> Vec<ScriptEntry> {
    let by_id: HashMap<&str, &AnnotatedExample> =
        gold.iter().map(|a| (a.record_id.as_str(), a)).collect();
    records
        .iter()
        .filter_map(|r| {
            let g = by_id.get(r.record_id.as_str())?;
            Some(ScriptEntry {
                prompt_digest: prompt_digest(&build_user_prompt(r)),
                record_id: Some(r.record_id.clone()),
                replies: vec![ScriptedReply::Content {
                    content: render_output(g.gold, &g.explanation),
                    delay_ms: None,
                }],
            })
        })
        .collect()
}
