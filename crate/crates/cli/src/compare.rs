//! Side-by-side comparison of two metrics reports.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use mscrf_core::eval::{paired_t_test, TTest};

use crate::error::{CliError, CliResult};
use crate::report::MetricsReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub labels: Vec<String>,
    /// `b - a` per class accuracy, `None` where either side lacks the class.
    pub delta_per_class: Vec<Option<f64>>,
    pub delta_ca: f64,
    pub delta_oa: f64,
    pub delta_ji: f64,
    /// Paired t-test on per-image OA (`a` versus `b`).
    pub t_test: Option<TTest>,
    pub table: String,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v))
}

fn row(name: &str, report: &MetricsReport) -> Vec<String> {
    let mut cells = vec![name.to_string()];
    cells.extend(report.labels.iter().map(|l| pct(report.per_class[l].accuracy)));
    cells.extend([pct(Some(report.ca)), pct(Some(report.oa)), pct(Some(report.ji))]);
    cells
}

fn format_table(rows: &[Vec<String>]) -> String {
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap()).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        writeln!(out, "{}", cells.join(" | ")).unwrap();
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            writeln!(out, "{}", rule.join("-|-")).unwrap();
        }
    }
    out
}

/// Per-class accuracies, CA, OA and JI of both reports with `b - a` deltas
/// and a paired t-test over per-image OA.
pub fn compare_reports(a: &MetricsReport, b: &MetricsReport) -> CliResult<Comparison> {
    if a.labels != b.labels || a.mode != b.mode {
        return Err(CliError::FoldMismatch("label sets or modes differ".into()));
    }
    let images = |r: &MetricsReport| r.per_image.iter().map(|s| (s.id.clone(), s.fold)).collect::<Vec<_>>();
    if images(a) != images(b) {
        return Err(CliError::FoldMismatch("reports cover different images or fold assignments".into()));
    }
    let delta_per_class = a
        .labels
        .iter()
        .map(|l| Some(b.per_class[l].accuracy? - a.per_class[l].accuracy?))
        .collect();
    let (sa, sb): (Vec<f64>, Vec<f64>) = a
        .per_image
        .iter()
        .zip(&b.per_image)
        .filter_map(|(x, y)| Some((x.oa?, y.oa?)))
        .unzip();
    let t_test = if sa.len() >= 2 { Some(paired_t_test(&sa, &sb)?) } else { None };

    let mut header = vec!["Method".to_string()];
    header.extend(a.labels.iter().cloned());
    header.extend(["CA".into(), "OA".into(), "JI".into()]);
    let (na, nb) = (if a.name == b.name { format!("{} (a)", a.name) } else { a.name.clone() }, if a.name == b.name { format!("{} (b)", b.name) } else { b.name.clone() });
    let mut delta_row = vec!["delta (b - a)".to_string()];
    let signed = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{:+.2}", 100.0 * v));
    delta_row.extend(a.labels.iter().map(|l| signed(b.per_class[l].accuracy.zip(a.per_class[l].accuracy).map(|(y, x)| y - x))));
    delta_row.extend([signed(Some(b.ca - a.ca)), signed(Some(b.oa - a.oa)), signed(Some(b.ji - a.ji))]);
    let mut table = format_table(&[header, row(&na, a), row(&nb, b), delta_row]);
    match &t_test {
        Some(t) => writeln!(
            table,
            "paired t-test on per-image OA: t = {:.4}, p = {:.6} (n = {}){}",
            t.t,
            t.p,
            t.degrees_of_freedom + 1,
            if t.significant() { ", significant at 0.05" } else { "" }
        )
        .unwrap(),
        None => writeln!(table, "paired t-test: fewer than two scored images").unwrap(),
    }

    Ok(Comparison {
        a: a.name.clone(),
        b: b.name.clone(),
        labels: a.labels.clone(),
        delta_per_class,
        delta_ca: b.ca - a.ca,
        delta_oa: b.oa - a.oa,
        delta_ji: b.ji - a.ji,
        t_test,
        table,
    })
}
