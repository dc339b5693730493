//! Detector accuracy metrics, corpus-level gap rates and error analysis.
//!
//! Per-example metrics treat a [`GapLabelSet`] as a 4-dimensional binary
//! vector including the explicit "no gaps" coordinate, so neither the
//! predicted nor the gold vector can have zero norm. GapScore, GapHalu and
//! the category rates only read the G1–G3 coordinates.

mod rouge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{GapLabelSet, Label, PerLabel};

pub use rouge::{lcs_len, rouge, tokenize, RougeScore, RougeVariant};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no examples to evaluate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub record_id: String,
    pub gold: GapLabelSet,
    pub predicted: GapLabelSet,
}

pub fn gem(gold: GapLabelSet, pred: GapLabelSet) -> f64 {
    if gold == pred {
        1.0
    } else {
        0.0
    }
}

/// `|gold ∩ pred| / |pred|`, the dot product over the predicted norm squared.
pub fn gap_precision(gold: GapLabelSet, pred: GapLabelSet) -> f64 {
    gold.intersection_len(pred) as f64 / pred.len() as f64
}

pub fn gap_recall(gold: GapLabelSet, pred: GapLabelSet) -> f64 {
    gold.intersection_len(pred) as f64 / gold.len() as f64
}

/// Harmonic mean of GP and GR, 0 when both are 0.
pub fn gap_f1(gold: GapLabelSet, pred: GapLabelSet) -> f64 {
    let p = gap_precision(gold, pred);
    let r = gap_recall(gold, pred);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Neumaier-compensated mean so that reduction order does not matter.
pub(crate) fn mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = 0usize;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        n += 1;
    }
    (n > 0).then(|| (sum + comp) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorMeans {
    #[serde(rename = "mGEM")]
    pub m_gem: f64,
    #[serde(rename = "mGP")]
    pub m_gp: f64,
    #[serde(rename = "mGR")]
    pub m_gr: f64,
    #[serde(rename = "mGF1")]
    pub m_gf1: f64,
}

pub fn aggregate(outcomes: &[DetectionOutcome]) -> Result<DetectorMeans, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let m = |f: fn(GapLabelSet, GapLabelSet) -> f64| {
        mean(outcomes.iter().map(|o| f(o.gold, o.predicted))).unwrap()
    };
    Ok(DetectorMeans {
        m_gem: m(gem),
        m_gp: m(gap_precision),
        m_gr: m(gap_recall),
        m_gf1: m(gap_f1),
    })
}

fn capped_rate(predictions: &[GapLabelSet], labels: &[Label]) -> Result<f64, MetricsError> {
    mean(predictions.iter().map(|p| {
        let hits = labels.iter().filter(|&&l| p.contains(l)).count();
        hits.min(1) as f64
    }))
    .ok_or(MetricsError::Empty)
}

/// Fraction of examples with any gap in G1–G3.
pub fn gap_score(predictions: &[GapLabelSet]) -> Result<f64, MetricsError> {
    capped_rate(
        predictions,
        &[
            Label::Intrinsic,
            Label::TargetMismatch,
            Label::CitationContent,
        ],
    )
}

/// Fraction of examples with an intrinsic gap or citation content mismatch.
pub fn gap_halu(predictions: &[GapLabelSet]) -> Result<f64, MetricsError> {
    capped_rate(predictions, &[Label::Intrinsic, Label::CitationContent])
}

pub fn category_rates(predictions: &[GapLabelSet]) -> Result<PerLabel<f64>, MetricsError> {
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(PerLabel::from_fn(|l| {
        mean(predictions.iter().map(|p| u8::from(p.contains(l)) as f64)).unwrap()
    }))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDenominator {
    /// Divide by the number of examples.
    #[default]
    Example,
    /// Divide over-predictions by predicted instances of the label and
    /// under-predictions by gold instances of the label.
    Instance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCell {
    pub over_count: usize,
    pub under_count: usize,
    pub over_rate: f64,
    pub under_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub denominator: ErrorDenominator,
    pub n: usize,
    pub rows: PerLabel<ErrorCell>,
}

impl ErrorTable {
    pub fn nonzero_cells(&self) -> usize {
        self.rows
            .iter()
            .map(|(_, c)| usize::from(c.over_rate != 0.0) + usize::from(c.under_rate != 0.0))
            .sum()
    }
}

pub fn error_analysis(
    outcomes: &[DetectionOutcome],
    denominator: ErrorDenominator,
) -> Result<ErrorTable, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = outcomes.len();
    let rows = PerLabel::from_fn(|l| {
        let count =
            |f: &dyn Fn(&DetectionOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
        let over = count(&|o| o.predicted.contains(l) && !o.gold.contains(l));
        let under = count(&|o| o.gold.contains(l) && !o.predicted.contains(l));
        let (over_den, under_den) = match denominator {
            ErrorDenominator::Example => (n, n),
            ErrorDenominator::Instance => (
                count(&|o| o.predicted.contains(l)),
                count(&|o| o.gold.contains(l)),
            ),
        };
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        ErrorCell {
            over_count: over,
            under_count: under,
            over_rate: ratio(over, over_den),
            under_rate: ratio(under, under_den),
        }
    });
    Ok(ErrorTable {
        denominator,
        n,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeSummary {
    pub n: usize,
    pub r1: RougeScore,
    pub r2: RougeScore,
    pub rl: RougeScore,
}

/// Mean ROUGE precision/recall/F over (candidate, reference) pairs.
pub fn rouge_summary<'a, I>(pairs: I) -> Option<RougeSummary>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let pairs: Vec<_> = pairs.into_iter().collect();
    let avg = |v: RougeVariant| -> Option<RougeScore> {
        let scores: Vec<RougeScore> = pairs.iter().map(|(c, r)| rouge(c, r, v)).collect();
        Some(RougeScore {
            precision: mean(scores.iter().map(|s| s.precision))?,
            recall: mean(scores.iter().map(|s| s.recall))?,
            f: mean(scores.iter().map(|s| s.f))?,
        })
    };
    Some(RougeSummary {
        n: pairs.len(),
        r1: avg(RougeVariant::One)?,
        r2: avg(RougeVariant::Two)?,
        rl: avg(RougeVariant::Lcs)?,
    })
}

/// Aggregate evaluation of one detector run.
///
/// Accuracy means and the error table are present only when gold labels
/// were supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub n_failed: usize,
    #[serde(rename = "mGEM", default, skip_serializing_if = "Option::is_none")]
    pub m_gem: Option<f64>,
    #[serde(rename = "mGP", default, skip_serializing_if = "Option::is_none")]
    pub m_gp: Option<f64>,
    #[serde(rename = "mGR", default, skip_serializing_if = "Option::is_none")]
    pub m_gr: Option<f64>,
    #[serde(rename = "mGF1", default, skip_serializing_if = "Option::is_none")]
    pub m_gf1: Option<f64>,
    pub gap_score: f64,
    pub gap_halu: f64,
    pub category_rates: PerLabel<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_table: Option<ErrorTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge: Option<RougeSummary>,
}

impl MetricsReport {
    /// Corpus-level rates only, for predictions without gold labels.
    pub fn from_predictions(
        predictions: &[GapLabelSet],
        n_failed: usize,
    ) -> Result<Self, MetricsError> {
        Ok(MetricsReport {
            n: predictions.len(),
            n_failed,
            m_gem: None,
            m_gp: None,
            m_gr: None,
            m_gf1: None,
            gap_score: gap_score(predictions)?,
            gap_halu: gap_halu(predictions)?,
            category_rates: category_rates(predictions)?,
            error_table: None,
            rouge: None,
        })
    }

    pub fn from_outcomes(
        outcomes: &[DetectionOutcome],
        n_failed: usize,
        denominator: ErrorDenominator,
    ) -> Result<Self, MetricsError> {
        let predictions: Vec<GapLabelSet> = outcomes.iter().map(|o| o.predicted).collect();
        let means = aggregate(outcomes)?;
        Ok(MetricsReport {
            m_gem: Some(means.m_gem),
            m_gp: Some(means.m_gp),
            m_gr: Some(means.m_gr),
            m_gf1: Some(means.m_gf1),
            error_table: Some(error_analysis(outcomes, denominator)?),
            ..Self::from_predictions(&predictions, n_failed)?
        })
    }

    pub fn means(&self) -> Option<DetectorMeans> {
        Some(DetectorMeans {
            m_gem: self.m_gem?,
            m_gp: self.m_gp?,
            m_gr: self.m_gr?,
            m_gf1: self.m_gf1?,
        })
    }

    /// Violated report invariants, empty when the report is consistent.
    ///
    /// `tolerance` absorbs rounding in reports transcribed at two decimals.
    pub fn invariant_violations(&self, tolerance: f64) -> Vec<String> {
        let mut out = Vec::new();
        let in_unit = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(-tolerance..=1.0 + tolerance).contains(&v) || v.is_nan() {
                out.push(format!("{name} = {v} is outside [0,1]"));
            }
        };
        for (name, v) in [
            ("mGEM", self.m_gem),
            ("mGP", self.m_gp),
            ("mGR", self.m_gr),
            ("mGF1", self.m_gf1),
        ] {
            if let Some(v) = v {
                in_unit(name, v, &mut out);
            }
        }
        in_unit("gap_score", self.gap_score, &mut out);
        in_unit("gap_halu", self.gap_halu, &mut out);
        for (l, v) in self.category_rates.iter() {
            in_unit(&format!("rate({l})"), *v, &mut out);
        }
        let r = &self.category_rates;
        if self.gap_halu > self.gap_score + tolerance {
            out.push(format!(
                "gap_halu {} exceeds gap_score {}",
                self.gap_halu, self.gap_score
            ));
        }
        let halu_lo = r.g1.max(r.g3);
        let halu_hi = (r.g1 + r.g3).min(1.0);
        if self.gap_halu + tolerance < halu_lo || self.gap_halu > halu_hi + tolerance {
            out.push(format!(
                "gap_halu {} outside [{halu_lo}, {halu_hi}]",
                self.gap_halu
            ));
        }
        let score_lo = r.g1.max(r.g2).max(r.g3);
        let score_hi = (r.g1 + r.g2 + r.g3).min(1.0);
        if self.gap_score + tolerance < score_lo || self.gap_score > score_hi + tolerance {
            out.push(format!(
                "gap_score {} outside [{score_lo}, {score_hi}]",
                self.gap_score
            ));
        }
        out
    }
}
