//! Byte-stable CSV renderings of reports. Floats use six decimals.

use gapcheck_core::corpus::DatasetStats;
use gapcheck_core::detector::{AblationRow, AblationStatus};
use gapcheck_core::metrics::{ErrorTable, MetricsReport};
use gapcheck_core::taxonomy::Label;

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub const ABLATION_HEADER: [&str; 10] = [
    "k",
    "n",
    "n_failed",
    "mGEM",
    "mGP",
    "mGR",
    "mGF1",
    "gap_score",
    "gap_halu",
    "status",
];

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let body = rows
        .iter()
        .map(|r| {
            let rep = r.report.as_ref();
            vec![
                r.k.to_string(),
                r.n.to_string(),
                r.n_failed.to_string(),
                opt(rep.and_then(|m| m.m_gem)),
                opt(rep.and_then(|m| m.m_gp)),
                opt(rep.and_then(|m| m.m_gr)),
                opt(rep.and_then(|m| m.m_gf1)),
                opt(rep.map(|m| m.gap_score)),
                opt(rep.map(|m| m.gap_halu)),
                match r.status {
                    AblationStatus::Ok => "ok",
                    AblationStatus::AllFailed => "all-failed",
                }
                .to_owned(),
            ]
        })
        .collect();
    to_csv(&ABLATION_HEADER, body)
}

pub fn metrics_csv(report: &MetricsReport) -> String {
    let header = [
        "n",
        "n_failed",
        "mGEM",
        "mGP",
        "mGR",
        "mGF1",
        "gap_score",
        "gap_halu",
        "rate_G0",
        "rate_G1",
        "rate_G2",
        "rate_G3",
        "rouge1",
        "rouge2",
        "rougeL",
    ];
    let r = &report.category_rates;
    let rouge = report.rouge.as_ref();
    let row = vec![
        report.n.to_string(),
        report.n_failed.to_string(),
        opt(report.m_gem),
        opt(report.m_gp),
        opt(report.m_gr),
        opt(report.m_gf1),
        num(report.gap_score),
        num(report.gap_halu),
        num(r.g0),
        num(r.g1),
        num(r.g2),
        num(r.g3),
        opt(rouge.map(|x| x.r1.f)),
        opt(rouge.map(|x| x.r2.f)),
        opt(rouge.map(|x| x.rl.f)),
    ];
    to_csv(&header, vec![row])
}

pub fn errors_csv(table: &ErrorTable) -> String {
    let header = [
        "label",
        "over_count",
        "over_rate",
        "under_count",
        "under_rate",
    ];
    let rows = table
        .rows
        .iter()
        .map(|(l, c)| {
            vec![
                l.code().to_owned(),
                c.over_count.to_string(),
                num(c.over_rate),
                c.under_count.to_string(),
                num(c.under_rate),
            ]
        })
        .collect();
    to_csv(&header, rows)
}

pub fn stats_text(stats: &DatasetStats) -> String {
    let mut out = format!(
        "examples: {}\nlabel instances: {}\n",
        stats.n_examples, stats.n_label_instances
    );
    for l in [
        Label::Intrinsic,
        Label::TargetMismatch,
        Label::CitationContent,
        Label::NoGaps,
    ] {
        out.push_str(&format!(
            "{} {:<26} {:>4}  {:.2}\n",
            l.code(),
            l.name(),
            stats.label_counts[l],
            stats.label_distribution[l]
        ));
    }
    out.push_str(&format!("balance: {:.2}\n", stats.balance));
    out
}
