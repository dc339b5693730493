//! Citation extraction and rule-based screening of generations.
//!
//! Extraction recognises reporter citations (`440 U.S. 48, 55`,
//! `359 F.2d 292, 294 (C.A. 4, 1966)`). Coverage compares the normalized
//! keys a generation cites with the keys it was asked to cite. Screening
//! surfaces redundancy, structural markers and word-count bounds for a
//! reviewer; nothing here assigns a gap label.

mod grammar;
mod screen;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::GenerationRecord;

pub use grammar::{
    citation_key, extract_citations, normalize_key, Citation, CitationGrammar, Confidence, Span,
    DEFAULT_REPORTERS,
};
pub use screen::{
    screen_text, split_sentences, MarkerHit, Repeat, ScreenConfig, ScreeningSignals,
    DEFAULT_MARKERS,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub cited: BTreeSet<String>,
    pub missing: BTreeSet<String>,
    pub extra: BTreeSet<String>,
}

pub fn coverage(record: &GenerationRecord) -> CoverageReport {
    coverage_with(CitationGrammar::default_grammar(), record)
}

pub fn coverage_with(grammar: &CitationGrammar, record: &GenerationRecord) -> CoverageReport {
    let keys = |text: &str| -> BTreeSet<String> {
        grammar.extract(text).iter().map(Citation::key).collect()
    };
    let cited = keys(&record.generation);
    let required: BTreeSet<String> = record
        .required_citations
        .iter()
        .map(|r| grammar.normalize_key(r))
        .collect();
    let in_previous = keys(&record.previous_text);
    let missing = required.difference(&cited).cloned().collect();
    let extra = cited
        .iter()
        .filter(|k| !required.contains(*k) && !in_previous.contains(*k))
        .cloned()
        .collect();
    CoverageReport {
        cited,
        missing,
        extra,
    }
}

pub fn screen(record: &GenerationRecord, config: &ScreenConfig) -> ScreeningSignals {
    screen_text(
        &record.generation,
        config,
        CitationGrammar::default_grammar(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Reference;

    fn record(generation: &str, required: &[&str], previous: &str) -> GenerationRecord {
        GenerationRecord {
            record_id: "r".into(),
            model_name: "m".into(),
            previous_text: previous.into(),
            generation: generation.into(),
            target: String::new(),
            required_citations: required.iter().map(|s| s.to_string()).collect(),
            references: required
                .iter()
                .map(|k| Reference {
                    cite_key: k.to_string(),
                    text: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn no_citations_everything_missing() {
        let r = record("A generation without any cites.", &["440 U.S. 48"], "");
        let c = coverage(&r);
        assert!(c.cited.is_empty());
        assert_eq!(c.missing, BTreeSet::from(["440 U.S. 48".to_string()]));
        assert!(c.extra.is_empty());
    }

    #[test]
    fn extra_excludes_previous_text() {
        let r = record(
            "See 440 U.S. 48, 55 and 128 S.Ct. 2343 and 908 F.2d 1385.",
            &["440 U.S. 48"],
            "Earlier the court discussed 128 S.Ct. 2343.",
        );
        let c = coverage(&r);
        assert!(c.missing.is_empty());
        assert_eq!(c.extra, BTreeSet::from(["908 F.2d 1385".to_string()]));
        assert!(c.extra.is_subset(&c.cited));
    }
}
