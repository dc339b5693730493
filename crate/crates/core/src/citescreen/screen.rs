//! Rule-based triage signals over a generation. These never become labels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::grammar::{CitationGrammar, Span};

pub const DEFAULT_MARKERS: &[&str] = &[
    "ORDER",
    "OPINION AND ORDER",
    "Reversed.",
    "Affirmed.",
    "CONCLUSIONS OF LAW",
];

/// Tokens ending in a period that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "v.", "vs.", "Mr.", "Mrs.", "Ms.", "Dr.", "Co.", "Corp.", "Inc.", "Ltd.", "No.", "Nos.", "Id.",
    "id.", "Cir.", "App.", "Ann.", "Stat.", "Rev.", "Supp.", "ed.", "Ed.", "e.g.", "i.e.",
    "U.S.C.", "P.R.", "St.", "Jr.", "Sr.", "Bankr.", "Bkrtcy.", "Civ.", "Crim.", "Dist.", "Ct.",
    "et al.", "al.", "cf.", "Cf.", "See.", "art.", "Art.", "Sec.", "para.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenConfig {
    /// Word n-gram length for redundancy detection.
    pub ngram: usize,
    pub markers: Vec<String>,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig {
            ngram: 8,
            markers: DEFAULT_MARKERS.iter().map(|s| s.to_string()).collect(),
            min_words: 100,
            max_words: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repeat {
    pub text: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerHit {
    pub marker: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningSignals {
    pub repeated_sentences: Vec<Repeat>,
    pub repeated_ngrams: Vec<Repeat>,
    pub structural_markers: Vec<MarkerHit>,
    pub word_count: usize,
    pub word_count_in_bounds: bool,
}

pub fn screen_text(
    text: &str,
    config: &ScreenConfig,
    grammar: &CitationGrammar,
) -> ScreeningSignals {
    let sentences: Vec<String> = split_sentences(text, grammar)
        .into_iter()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    let repeated_sentences = repeats(sentences.into_iter());

    let tokens: Vec<&str> = words(text).collect();
    let repeated_ngrams = if config.ngram == 0 || tokens.len() < config.ngram {
        Vec::new()
    } else {
        repeats(tokens.windows(config.ngram).map(|w| w.join(" ")))
    };

    let mut structural_markers: Vec<MarkerHit> = config
        .markers
        .iter()
        .flat_map(|m| find_marker(text, m))
        .collect();
    structural_markers.sort_by(|a, b| {
        (a.span.start, a.span.end, &a.marker).cmp(&(b.span.start, b.span.end, &b.marker))
    });

    let word_count = tokens.len();
    ScreeningSignals {
        repeated_sentences,
        repeated_ngrams,
        structural_markers,
        word_count,
        word_count_in_bounds: (config.min_words..=config.max_words).contains(&word_count),
    }
}

/// Items seen at least twice, in order of first appearance.
fn repeats(items: impl Iterator<Item = String>) -> Vec<Repeat> {
    let mut order = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for item in items {
        if item.is_empty() {
            continue;
        }
        let n = counts.entry(item.clone()).or_insert(0);
        if *n == 0 {
            order.push(item);
        }
        *n += 1;
    }
    order
        .into_iter()
        .filter_map(|text| {
            let count = counts[&text];
            (count >= 2).then_some(Repeat { text, count })
        })
        .collect()
}

/// Whitespace tokens with surrounding punctuation trimmed; tokens without
/// any alphanumeric character are dropped.
fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
}

fn find_marker(text: &str, marker: &str) -> Vec<MarkerHit> {
    if marker.is_empty() {
        return Vec::new();
    }
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
    text.match_indices(marker)
        .filter(|(start, _)| {
            let end = start + marker.len();
            let before = text[..*start].chars().next_back();
            let after = text[end..].chars().next();
            let starts_word = marker.chars().next().is_some_and(char::is_alphanumeric);
            let ends_word = marker
                .chars()
                .next_back()
                .is_some_and(char::is_alphanumeric);
            !(starts_word && is_word(before)) && !(ends_word && is_word(after))
        })
        .map(|(start, _)| MarkerHit {
            marker: marker.to_owned(),
            span: Span {
                start,
                end: start + marker.len(),
            },
        })
        .collect()
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’')
}

fn is_abbreviation(token: &str, grammar: &CitationGrammar) -> bool {
    let token = token.trim_start_matches(['(', '[', '"', '“', '‘']);
    if ABBREVIATIONS.contains(&token) || grammar.is_reporter(token) {
        return true;
    }
    // Single initials such as "W." and dotted runs such as "D.Mass.".
    let letters: Vec<char> = token.chars().collect();
    (letters.len() == 2 && letters[0].is_uppercase())
        || (token.matches('.').count() >= 2 && !token.contains(|c: char| c.is_ascii_digit()))
}

/// Splits on terminal punctuation followed by whitespace and a capital
/// letter (optionally behind an opening quote), skipping known
/// abbreviations and reporter tokens.
pub fn split_sentences<'a>(text: &'a str, grammar: &CitationGrammar) -> Vec<&'a str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && is_closing(chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let mut m = k;
            while m < chars.len() && matches!(chars[m].1, '"' | '“' | '‘' | '(') {
                m += 1;
            }
            let next_upper = m < chars.len() && chars[m].1.is_uppercase();
            let token_start = text[..=pos]
                .rfind(char::is_whitespace)
                .map_or(0, |w| w + text[w..].chars().next().unwrap().len_utf8());
            let token = &text[token_start..=pos];
            let token = if c == '.' { token } else { "" };
            if k > j && next_upper && !(c == '.' && is_abbreviation(token, grammar)) {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = chars[k].0;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}
