//! Rendering of metric reports as JSON, CSV or an aligned text table.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::metrics::{IterationAccuracy, MetricsReport, Rates};

pub const CSV_HEADER: &str = "method,n,accuracy,csr,cr,or,oscr,calls_per_task";
pub const ITERATION_CSV_HEADER: &str = "method,iteration,n,accuracy";

const CR_NOTE: &str = "CR counts runs stopped by the clean gate as converged.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format {other:?}; expected json, csv or text")),
        }
    }
}

pub fn emit_report(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => to_csv(reports),
        ReportFormat::Text => to_text(reports),
    }
}

pub fn parse_json_report(text: &str) -> serde_json::Result<Vec<MetricsReport>> {
    serde_json::from_str(text)
}

fn to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let o = &r.overall;
        let csr = o.csr.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method, o.n, o.accuracy, csr, o.cr, o.or_rate, o.oscr, o.calls_per_task
        )
        .expect("write to string");
    }
    out
}

pub fn iteration_csv(rows: &[IterationAccuracy]) -> String {
    let mut out = String::from(ITERATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{}", r.method, r.iteration, r.n, r.accuracy).expect("write to string");
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn row(label: &str, r: &Rates) -> [String; 8] {
    [
        label.to_string(),
        r.n.to_string(),
        pct(r.accuracy),
        r.csr.map_or_else(|| "-".to_string(), pct),
        pct(r.cr),
        pct(r.or_rate),
        pct(r.oscr),
        format!("{:.2}", r.calls_per_task),
    ]
}

fn table(out: &mut String, first: &str, rows: &[[String; 8]]) {
    let header = [first, "n", "Acc%", "CSR%", "CR%", "OR%", "OscR%", "calls/task"].map(String::from);
    let mut widths = [0usize; 8];
    for r in std::iter::once(&header).chain(rows) {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    for r in std::iter::once(&header).chain(rows) {
        let mut line = String::new();
        for (i, (cell, w)) in r.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(line, "{cell:<w$}");
            } else {
                let _ = write!(line, "  {cell:>w$}");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

fn to_text(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    let overall: Vec<_> = reports.iter().map(|r| row(r.method.as_str(), &r.overall)).collect();
    table(&mut out, "method", &overall);
    for r in reports {
        out.push('\n');
        let _ = writeln!(out, "{} by category", r.method);
        let rows: Vec<_> = r.by_category.iter().map(|(k, v)| row(k, v)).collect();
        table(&mut out, "category", &rows);
        out.push('\n');
        let _ = writeln!(out, "{} by error type", r.method);
        let rows: Vec<_> = r.by_error_type.iter().map(|(k, v)| row(k, v)).collect();
        table(&mut out, "error_type", &rows);
    }
    if reports.iter().any(|r| r.overall.or_rate_accepted.is_some()) {
        out.push('\n');
        for r in reports {
            if let Some(v) = r.overall.or_rate_accepted {
                let _ = writeln!(out, "{}: OR over accepted severities {}%", r.method, pct(v));
            }
        }
    }
    out.push('\n');
    out.push_str(CR_NOTE);
    out.push('\n');
    out
}
