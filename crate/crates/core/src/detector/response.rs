//! Parsing detector output into labels, with a small fixed repair pipeline.

use serde::{Deserialize, Serialize};

use crate::taxonomy::{parse_label_list, GapLabelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub labels: Option<GapLabelSet>,
    pub explanation: String,
    pub status: ParseStatus,
}

impl ParsedResponse {
    fn failed() -> Self {
        ParsedResponse {
            labels: None,
            explanation: String::new(),
            status: ParseStatus::Failed,
        }
    }
}

#[derive(Deserialize)]
struct Output {
    label: Vec<i64>,
    #[serde(default)]
    explanation: String,
}

enum Attempt {
    Valid(GapLabelSet, String),
    /// Syntactically valid JSON whose labels break the label rules.
    Invalid,
    NotJson,
}

fn try_parse(text: &str) -> Attempt {
    match serde_json::from_str::<Output>(text.trim()) {
        Ok(o) => match parse_label_list(&o.label) {
            Ok(labels) => Attempt::Valid(labels, o.explanation),
            Err(_) => Attempt::Invalid,
        },
        Err(_) => Attempt::NotJson,
    }
}

fn strip_code_fences(text: &str) -> String {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t.to_owned();
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    let rest = rest.strip_suffix("```").unwrap_or(rest);
    rest.trim().to_owned()
}

fn outermost_braces(text: &str) -> String {
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => text[a..=b].to_owned(),
        _ => text.to_owned(),
    }
}

/// Rewrites single-quoted strings as JSON double-quoted strings.
fn normalize_single_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                out.push('"');
                while let Some(d) = chars.next() {
                    out.push(d);
                    match d {
                        '\\' => {
                            if let Some(e) = chars.next() {
                                out.push(e);
                            }
                        }
                        '"' => break,
                        _ => {}
                    }
                }
            }
            '\'' => {
                out.push('"');
                while let Some(d) = chars.next() {
                    match d {
                        '\\' => match chars.next() {
                            Some('\'') => out.push('\''),
                            Some(e) => {
                                out.push('\\');
                                out.push(e);
                            }
                            None => {}
                        },
                        '\'' => break,
                        '"' => out.push_str("\\\""),
                        d => out.push(d),
                    }
                }
                out.push('"');
            }
            c => out.push(c),
        }
    }
    out
}

/// Strict JSON first, then code-fence stripping, outermost-brace trimming
/// and single-quote normalization, applied cumulatively in that order.
/// Label-rule violations are failures at any stage.
pub fn parse_response(raw: &str) -> ParsedResponse {
    let repairs: [fn(&str) -> String; 3] =
        [strip_code_fences, outermost_braces, normalize_single_quotes];
    let mut text = raw.to_owned();
    let mut status = ParseStatus::Ok;
    for repair in std::iter::once(None).chain(repairs.iter().map(Some)) {
        if let Some(repair) = repair {
            let next = repair(&text);
            if next == text {
                continue;
            }
            text = next;
            status = ParseStatus::Repaired;
        }
        match try_parse(&text) {
            Attempt::Valid(labels, explanation) => {
                return ParsedResponse {
                    labels: Some(labels),
                    explanation,
                    status,
                }
            }
            Attempt::Invalid => return ParsedResponse::failed(),
            Attempt::NotJson => {}
        }
    }
    ParsedResponse::failed()
}

/// The canonical detector output for a label set, as the detector is asked
/// to produce it.
pub fn render_output(labels: GapLabelSet, explanation: &str) -> String {
    serde_json::json!({ "label": labels, "explanation": explanation }).to_string()
}
