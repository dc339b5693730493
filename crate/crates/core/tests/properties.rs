use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;

use gapcheck_core::citescreen::{coverage, extract_citations, normalize_key};
use gapcheck_core::corpus::{balance, GenerationRecord, Reference};
use gapcheck_core::detector::{parse_response, render_output, ParseStatus};
use gapcheck_core::metrics::{
    aggregate, error_analysis, gap_f1, gap_halu, gap_precision, gap_recall, gap_score, gem, rouge,
    DetectionOutcome, ErrorDenominator, MetricsReport, RougeVariant,
};
use gapcheck_core::taxonomy::{is_acceptable, parse_label_list, GapLabelSet, Label};

/// Reference metric definitions over plain integer sets.
mod oracle {
    use std::collections::HashSet;

    pub fn gem(g: &HashSet<i64>, p: &HashSet<i64>) -> f64 {
        if g == p {
            1.0
        } else {
            0.0
        }
    }

    pub fn gp(g: &HashSet<i64>, p: &HashSet<i64>) -> f64 {
        g.intersection(p).count() as f64 / p.len() as f64
    }

    pub fn gr(g: &HashSet<i64>, p: &HashSet<i64>) -> f64 {
        g.intersection(p).count() as f64 / g.len() as f64
    }

    pub fn gf1(g: &HashSet<i64>, p: &HashSet<i64>) -> f64 {
        let (a, b) = (gp(g, p), gr(g, p));
        if a + b == 0.0 {
            0.0
        } else {
            2.0 * a * b / (a + b)
        }
    }

    pub fn valid(raw: &[i64]) -> bool {
        let s: HashSet<i64> = raw.iter().copied().collect();
        !s.is_empty() && s.iter().all(|v| (0..=3).contains(v)) && !(s.contains(&0) && s.len() > 1)
    }
}

fn as_set(s: GapLabelSet) -> HashSet<i64> {
    s.to_vec().into_iter().map(i64::from).collect()
}

fn label_set() -> impl Strategy<Value = GapLabelSet> {
    prop::sample::select(GapLabelSet::all_valid())
}

fn outcome() -> impl Strategy<Value = DetectionOutcome> {
    (label_set(), label_set()).prop_map(|(gold, predicted)| DetectionOutcome {
        record_id: String::new(),
        gold,
        predicted,
    })
}

#[test]
fn metrics_match_oracle_on_every_pair() {
    let all = GapLabelSet::all_valid();
    assert_eq!(all.len(), 8);
    let mut pairs = 0;
    for &g in &all {
        for &p in &all {
            let (gs, ps) = (as_set(g), as_set(p));
            assert_eq!(gem(g, p), oracle::gem(&gs, &ps));
            assert!((gap_precision(g, p) - oracle::gp(&gs, &ps)).abs() < 1e-12);
            assert!((gap_recall(g, p) - oracle::gr(&gs, &ps)).abs() < 1e-12);
            assert!((gap_f1(g, p) - oracle::gf1(&gs, &ps)).abs() < 1e-12);
            pairs += 1;
        }
    }
    assert_eq!(pairs, 64);
}

#[test]
fn acceptability_truth_table() {
    for s in GapLabelSet::all_valid() {
        let set = as_set(s);
        assert_eq!(
            is_acceptable(s),
            !set.contains(&1) && !set.contains(&3),
            "{s}"
        );
    }
}

proptest! {
    #[test]
    fn label_parsing_matches_oracle(raw in prop::collection::vec(-2i64..6, 0..6)) {
        let parsed = parse_label_list(&raw);
        prop_assert_eq!(parsed.is_ok(), oracle::valid(&raw));
        if let Ok(s) = parsed {
            let expected: BTreeSet<u8> = raw.iter().map(|&v| v as u8).collect();
            prop_assert_eq!(s.to_vec(), expected.into_iter().collect::<Vec<_>>());
            let json = serde_json::to_string(&s).unwrap();
            prop_assert_eq!(serde_json::from_str::<GapLabelSet>(&json).unwrap(), s);
        }
    }

    #[test]
    fn per_example_metrics_bounded(g in label_set(), p in label_set()) {
        for v in [gem(g, p), gap_precision(g, p), gap_recall(g, p), gap_f1(g, p)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(gem(g, p) == 1.0, g == p);
        prop_assert_eq!(gap_precision(g, p), gap_recall(p, g));
    }

    #[test]
    fn means_are_order_independent(mut outcomes in prop::collection::vec(outcome(), 1..60), seed in any::<u64>()) {
        let a = aggregate(&outcomes).unwrap();
        let n = outcomes.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            outcomes.swap(i, (state >> 33) as usize % (i + 1));
        }
        let b = aggregate(&outcomes).unwrap();
        prop_assert!((a.m_gem - b.m_gem).abs() <= 1e-12);
        prop_assert!((a.m_gp - b.m_gp).abs() <= 1e-12);
        prop_assert!((a.m_gr - b.m_gr).abs() <= 1e-12);
        prop_assert!((a.m_gf1 - b.m_gf1).abs() <= 1e-12);
        prop_assert!(a.m_gem <= a.m_gf1 + 1e-12);
    }

    #[test]
    fn corpus_scores_respect_bounds(preds in prop::collection::vec(label_set(), 1..80)) {
        let score = gap_score(&preds).unwrap();
        let halu = gap_halu(&preds).unwrap();
        prop_assert!(halu <= score + 1e-12);
        let report = MetricsReport::from_predictions(&preds, 0).unwrap();
        prop_assert!(report.invariant_violations(1e-9).is_empty(), "{:?}", report.invariant_violations(1e-9));
        let gap_free = preds.iter().filter(|p| !p.has_gap()).count() as f64 / preds.len() as f64;
        prop_assert!((score + gap_free - 1.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_have_empty_error_table(golds in prop::collection::vec(label_set(), 1..40)) {
        let outcomes: Vec<_> = golds
            .iter()
            .map(|&g| DetectionOutcome { record_id: String::new(), gold: g, predicted: g })
            .collect();
        for d in [ErrorDenominator::Example, ErrorDenominator::Instance] {
            prop_assert_eq!(error_analysis(&outcomes, d).unwrap().nonzero_cells(), 0);
        }
    }

    #[test]
    fn error_counts_match_set_difference(outcomes in prop::collection::vec(outcome(), 1..40)) {
        let table = error_analysis(&outcomes, ErrorDenominator::Example).unwrap();
        for l in Label::ALL {
            let over = outcomes.iter().filter(|o| o.predicted.contains(l) && !o.gold.contains(l)).count();
            let under = outcomes.iter().filter(|o| o.gold.contains(l) && !o.predicted.contains(l)).count();
            prop_assert_eq!(table.rows[l].over_count, over);
            prop_assert_eq!(table.rows[l].under_count, under);
            prop_assert!((table.rows[l].over_rate - over as f64 / outcomes.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rendered_outputs_parse_ok(s in label_set(), expl in "[a-zA-Z0-9 ,.'\"]{0,40}") {
        let parsed = parse_response(&render_output(s, &expl));
        prop_assert_eq!(parsed.status, ParseStatus::Ok);
        prop_assert_eq!(parsed.labels, Some(s));
        prop_assert_eq!(parsed.explanation, expl);
    }

    #[test]
    fn fenced_outputs_are_repaired(s in label_set(), lead in "[A-Za-z ]{0,20}") {
        let raw = format!("{lead}```json\n{}\n```", render_output(s, "x"));
        let parsed = parse_response(&raw);
        prop_assert_eq!(parsed.status, ParseStatus::Repaired);
        prop_assert_eq!(parsed.labels, Some(s));
    }

    #[test]
    fn balance_in_unit_interval(counts in prop::collection::vec(0u32..50, 2..6)) {
        let total: u32 = counts.iter().sum();
        prop_assume!(total > 0);
        let dist: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let b = balance(&dist);
        prop_assert!((0.0..=1.0).contains(&b));
        let uniform = vec![1.0 / counts.len() as f64; counts.len()];
        prop_assert!((balance(&uniform) - 1.0).abs() < 1e-12);
    }
}

const REPORTERS: &[&str] = &["U.S.", "F.2d", "F.3d", "B.R.", "S.Ct.", "M.J."];

fn citation() -> impl Strategy<Value = (u32, &'static str, u32, Option<u32>)> {
    (
        1u32..999,
        prop::sample::select(REPORTERS),
        1u32..9999,
        prop::option::of(1u32..9999),
    )
}

fn render_cite((v, r, p, pin): &(u32, &str, u32, Option<u32>)) -> String {
    match pin {
        Some(pin) => format!("{v} {r} {p}, {pin}"),
        None => format!("{v} {r} {p}"),
    }
}

proptest! {
    #[test]
    fn extraction_round_trips(cites in prop::collection::vec(citation(), 1..6)) {
        let text = cites
            .iter()
            .map(|c| format!("The court relied on {}.", render_cite(c)))
            .collect::<Vec<_>>()
            .join(" See also the opinion below. ");
        let found = extract_citations(&text);
        prop_assert_eq!(found.len(), cites.len());
        for (f, c) in found.iter().zip(&cites) {
            prop_assert_eq!((f.volume, f.reporter.as_str(), f.first_page, f.pincite), (c.0, c.1, c.2, c.3));
            prop_assert_eq!(&text[f.raw_span.range()], render_cite(c));
            prop_assert_eq!(normalize_key(&f.key()), f.key());
        }
    }

    #[test]
    fn extraction_stable_under_append(cites in prop::collection::vec(citation(), 1..4), tail in citation()) {
        let base = cites.iter().map(|c| format!("In {} the court held so.", render_cite(c))).collect::<Vec<_>>().join(" ");
        let before = extract_citations(&base);
        let extended = format!("{base} Later, {} applied it.", render_cite(&tail));
        let after = extract_citations(&extended);
        prop_assert_eq!(&after[..before.len()], &before[..]);
        prop_assert_eq!(after.len(), before.len() + 1);
    }

    #[test]
    fn coverage_set_algebra(
        required in prop::collection::btree_set(citation().prop_map(|c| (c.0, c.1, c.2)), 0..5),
        cited in prop::collection::vec(citation(), 0..5),
    ) {
        let required: Vec<String> = required.iter().map(|(v, r, p)| format!("{v} {r} {p}")).collect();
        let generation = cited.iter().map(|c| format!("See {}.", render_cite(c))).collect::<Vec<_>>().join(" ");
        let record = GenerationRecord {
            record_id: "r".into(),
            model_name: "m".into(),
            previous_text: String::new(),
            generation,
            target: String::new(),
            references: required.iter().map(|k| Reference { cite_key: k.clone(), text: String::new() }).collect(),
            required_citations: required.clone(),
        };
        let cov = coverage(&record);
        let req: BTreeSet<String> = required.into_iter().collect();
        prop_assert!(cov.missing.is_subset(&req));
        prop_assert!(cov.missing.is_disjoint(&cov.cited));
        prop_assert!(cov.extra.is_disjoint(&req));
        prop_assert!(cov.extra.is_subset(&cov.cited));
        let covered: BTreeSet<String> = req.intersection(&cov.cited).cloned().collect();
        let union: BTreeSet<String> = covered.union(&cov.missing).cloned().collect();
        prop_assert_eq!(union, req);
    }

    #[test]
    fn rouge_properties(a in "[a-z ]{0,60}", b in "[a-z ]{0,60}") {
        for v in [RougeVariant::One, RougeVariant::Two, RougeVariant::Lcs] {
            let ab = rouge(&a, &b, v);
            let ba = rouge(&b, &a, v);
            for x in [ab.precision, ab.recall, ab.f] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
            }
            prop_assert!((ab.f - ba.f).abs() < 1e-12);
            prop_assert!((ab.precision - ba.recall).abs() < 1e-12);
        }
        let self_score = rouge(&a, &a, RougeVariant::Lcs);
        if a.split_whitespace().next().is_some() {
            prop_assert!((self_score.f - 1.0).abs() < 1e-12);
        }
    }
}
