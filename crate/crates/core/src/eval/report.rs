use std::fmt::Write;

use super::{MetricsReport, RocCurve};
use crate::classifiers::ClassifierKind;

pub const METRICS_CSV_HEADER: &str =
    "classifier,phase,f1,fbeta,precision,recall,specificity,gmean,avg,beta,auc,trt_s,prt_s";

/// One classifier's line in a report.
#[derive(Debug, Clone, Copy)]
pub struct ReportRow<'a> {
    pub kind: ClassifierKind,
    /// Mean cross-validation metrics, if cross-validation ran.
    pub cv: Option<&'a MetricsReport>,
    pub test: &'a MetricsReport,
}

fn seven(r: &MetricsReport) -> [f64; 7] {
    [r.f1, r.fbeta, r.precision, r.recall, r.specificity, r.gmean, r.avg]
}

fn timing(t: Option<f64>) -> String {
    t.map_or_else(|| "N/A".to_string(), |t| format!("{t:.3}"))
}

/// Markdown table with cross-validation metrics and TRT first, then test
/// metrics and PRT. Scores print to three decimals.
pub fn markdown_report(title: &str, rows: &[ReportRow<'_>]) -> String {
    const COLS: [&str; 7] = ["F1", "F-b", "Pre", "Rec", "Spec", "G-M", "Avg"];
    let mut out = String::new();
    if !title.is_empty() {
        let _ = writeln!(out, "### {title}\n");
    }
    let mut header = vec!["Clf.".to_string()];
    header.extend(COLS.iter().map(|c| format!("CV {c}")));
    header.push("TRT(s)".into());
    header.extend(COLS.iter().map(|c| c.to_string()));
    header.push("PRT(s)".into());
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let mut cells = vec![row.kind.label().to_string()];
        match row.cv {
            Some(cv) => cells.extend(seven(cv).iter().map(|v| format!("{v:.3}"))),
            None => cells.extend(std::iter::repeat_n("N/A".to_string(), 7)),
        }
        cells.push(timing(row.test.trt_s));
        cells.extend(seven(row.test).iter().map(|v| format!("{v:.3}")));
        cells.push(timing(row.test.prt_s));
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    if let Some(first) = rows.first() {
        let _ = writeln!(out, "\nβ = {}", first.test.beta);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Full-precision CSV of the same rows, one line per phase. Timing columns
/// come last so they are easy to drop when diffing runs.
pub fn metrics_csv(rows: &[ReportRow<'_>]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for row in rows {
        let mut line = |phase: &str, r: &MetricsReport, trt: Option<f64>, prt: Option<f64>| {
            let vals: Vec<String> = seven(r).iter().map(f64::to_string).collect();
            let _ = writeln!(
                out,
                "{},{phase},{},{},{},{},{}",
                row.kind,
                vals.join(","),
                r.beta,
                opt(r.auc),
                opt(trt),
                opt(prt)
            );
        };
        if let Some(cv) = row.cv {
            line("cv", cv, cv.trt_s, None);
        }
        line("test", row.test, row.test.trt_s, row.test.prt_s);
    }
    out
}

/// `threshold,fpr,tpr` rows followed by `auc,<value>`.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    let _ = writeln!(out, "auc,{}", curve.auc);
    out
}
