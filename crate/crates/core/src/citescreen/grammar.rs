//! Reporter-citation grammar: `volume reporter first_page[, pincite][ (court year)]`.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Reporter abbreviations recognised with full confidence.
pub const DEFAULT_REPORTERS: &[&str] = &[
    "U.S.",
    "S.Ct.",
    "L.Ed.",
    "L.Ed.2d",
    "F.",
    "F.2d",
    "F.3d",
    "F.4th",
    "F.Supp.",
    "F.Supp.2d",
    "F.Supp.3d",
    "B.R.",
    "M.J.",
    "U.S.App.D.C.",
    "S.E.",
    "S.E.2d",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    /// Reporter is on the whitelist.
    Listed,
    /// A dotted abbreviation between two numbers that is not whitelisted.
    Unlisted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn range(self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Citation {
    pub volume: u32,
    pub reporter: String,
    pub first_page: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pincite: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub court_year: Option<String>,
    pub raw_span: Span,
    pub confidence: Confidence,
}

impl Citation {
    /// `"volume reporter first_page"`, pincite and parenthetical dropped.
    pub fn key(&self) -> String {
        format!("{} {} {}", self.volume, self.reporter, self.first_page)
    }
}

pub fn citation_key(c: &Citation) -> String {
    c.key()
}

static UNLISTED_REPORTER: &str =
    r"[A-Z][A-Za-z]{0,11}\.(?:\s?(?:[A-Z][A-Za-z]{0,11}\.|\d{1,2}[a-z]{1,2}\b))*";
static PINCITE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^,\s*(\d{1,5})(?:\s*[-–]\s*\d{1,5})?\b").unwrap());
static PARENTHETICAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\(([^()\n]{1,80})\)").unwrap());
static YEAR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|[^0-9])(?:1[6-9]|20)\d\d(?:[^0-9]|$)").unwrap());
static DEFAULT_GRAMMAR: LazyLock<CitationGrammar> =
    LazyLock::new(|| CitationGrammar::new(DEFAULT_REPORTERS.iter().copied()));

/// Compiled citation matcher over a reporter whitelist.
#[derive(Debug, Clone)]
pub struct CitationGrammar {
    reporters: Vec<String>,
    pattern: Regex,
}

impl CitationGrammar {
    pub fn new<'a, I: IntoIterator<Item = &'a str>>(reporters: I) -> Self {
        let mut reporters: Vec<String> = reporters.into_iter().map(str::to_owned).collect();
        reporters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        reporters.dedup();
        let listed = reporters
            .iter()
            .map(|r| reporter_pattern(r))
            .collect::<Vec<_>>()
            .join("|");
        let pattern = Regex::new(&format!(
            r"\b(?P<vol>\d{{1,4}})\s+(?:(?P<listed>{listed})|(?P<unlisted>{UNLISTED_REPORTER}))\s+(?P<page>\d{{1,5}})\b"
        ))
        .expect("reporter pattern compiles");
        CitationGrammar { reporters, pattern }
    }

    pub fn default_grammar() -> &'static CitationGrammar {
        &DEFAULT_GRAMMAR
    }

    pub fn reporters(&self) -> &[String] {
        &self.reporters
    }

    pub fn is_reporter(&self, token: &str) -> bool {
        self.reporters.iter().any(|r| r == token)
    }

    fn canonical_reporter(&self, matched: &str) -> String {
        let squashed: String = matched.chars().filter(|c| !c.is_whitespace()).collect();
        self.reporters
            .iter()
            .find(|r| **r == squashed)
            .cloned()
            .unwrap_or(squashed)
    }

    /// Every citation in `text`, left to right and non-overlapping.
    pub fn extract(&self, text: &str) -> Vec<Citation> {
        let mut out = Vec::new();
        let mut pos = 0;
        while let Some(caps) = self.pattern.captures_at(text, pos) {
            let whole = caps.get(0).unwrap();
            let (reporter, confidence) = match caps.name("listed") {
                Some(m) => (self.canonical_reporter(m.as_str()), Confidence::Listed),
                None => (
                    collapse_ws(caps.name("unlisted").unwrap().as_str()),
                    Confidence::Unlisted,
                ),
            };
            let (Ok(volume), Ok(first_page)) =
                (caps["vol"].parse::<u32>(), caps["page"].parse::<u32>())
            else {
                pos = whole.end();
                continue;
            };
            let mut end = whole.end();
            let mut pincite = None;
            if let Some(p) = PINCITE.captures(&text[end..]) {
                let digits = p.get(1).unwrap();
                // `48, 99 S.Ct. 914` is a parallel cite, not a pin page.
                let next_is_citation = self
                    .pattern
                    .find_at(text, end + digits.start())
                    .is_some_and(|m| m.start() == end + digits.start());
                if !next_is_citation {
                    pincite = digits.as_str().parse().ok();
                    end += p.get(0).unwrap().end();
                }
            }
            let mut court_year = None;
            if let Some(p) = PARENTHETICAL.captures(&text[end..]) {
                let inner = p.get(1).unwrap().as_str();
                if YEAR.is_match(inner) {
                    court_year = Some(inner.trim().to_owned());
                    end += p.get(0).unwrap().end();
                }
            }
            out.push(Citation {
                volume,
                reporter,
                first_page,
                pincite,
                court_year,
                raw_span: Span {
                    start: whole.start(),
                    end,
                },
                confidence,
            });
            pos = end;
        }
        out
    }

    /// Canonical key for a citation string such as `"440 U.S. 48, 55"`.
    /// Falls back to whitespace-collapsed text when it does not parse.
    pub fn normalize_key(&self, raw: &str) -> String {
        let trimmed = raw.trim();
        match self.extract(trimmed).as_slice() {
            [c] if c.raw_span.start == 0 => c.key(),
            _ => collapse_ws(trimmed),
        }
    }
}

/// Splits `L.Ed.2d` into `L.`, `Ed.`, `2d` and allows one optional space
/// between the pieces so `F. 2d` matches `F.2d`.
fn reporter_pattern(reporter: &str) -> String {
    let mut pieces = Vec::new();
    let mut cur = String::new();
    for ch in reporter.chars() {
        cur.push(ch);
        if ch == '.' {
            pieces.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        pieces.push(cur);
    }
    let body = pieces
        .iter()
        .map(|p| regex::escape(p))
        .collect::<Vec<_>>()
        .join(r"\s?");
    if reporter.ends_with('.') {
        body
    } else {
        format!(r"{body}\b")
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn extract_citations(text: &str) -> Vec<Citation> {
    CitationGrammar::default_grammar().extract(text)
}

pub fn normalize_key(raw: &str) -> String {
    CitationGrammar::default_grammar().normalize_key(raw)
}
