//! Metric reports for one or more labelled groups of trajectories. Bench
//! and report both render through here so their output matches exactly.

use std::path::Path;

use closedloop::metrics::{accuracy_by_iteration, compute_all, MetricsError, MetricsOptions};
use closedloop::report::{emit_report, iteration_csv, ReportFormat};
use closedloop::{MetricsReport, Termination, Trajectory};
use log::warn;
use serde_json::json;

use crate::error::{self, CliError};

/// Reports for one run label, in method order.
pub type Labelled = (Option<String>, Vec<MetricsReport>);

pub struct Group {
    pub label: Option<String>,
    pub trajectories: Vec<Trajectory>,
}

/// Splits by run label, keeping first-seen order.
pub fn group(trajectories: Vec<Trajectory>) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for t in trajectories {
        match groups.iter_mut().find(|g| g.label == t.run_label) {
            Some(g) => g.trajectories.push(t),
            None => groups.push(Group { label: t.run_label.clone(), trajectories: vec![t] }),
        }
    }
    groups
}

fn completed(g: &Group) -> Vec<Trajectory> {
    g.trajectories.iter().filter(|t| t.termination != Termination::Aborted).cloned().collect()
}

/// Aborted runs are left out; a group with nothing else is skipped.
pub fn reports(groups: &[Group], options: MetricsOptions) -> Result<Vec<Labelled>, MetricsError> {
    let mut out = Vec::new();
    for g in groups {
        match compute_all(&completed(g), options) {
            Ok(r) => out.push((g.label.clone(), r)),
            Err(MetricsError::Empty) => {
                warn!("{}: no completed trajectories", g.label.as_deref().unwrap_or("run"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn labelled(groups: &[Labelled]) -> bool {
    groups.iter().any(|(l, _)| l.is_some())
}

pub fn render(groups: &[Labelled], format: ReportFormat) -> String {
    if !labelled(groups) {
        let all: Vec<MetricsReport> = groups.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
        return emit_report(&all, format);
    }
    let label = |l: &Option<String>| l.clone().unwrap_or_default();
    match format {
        ReportFormat::Json => {
            let v: Vec<_> = groups.iter().map(|(l, r)| json!({"run_label": label(l), "reports": r})).collect();
            let mut s = serde_json::to_string_pretty(&v).expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => prefixed(groups.iter().map(|(l, r)| (label(l), emit_report(r, format)))),
        ReportFormat::Text => {
            let mut s = String::new();
            for (i, (l, r)) in groups.iter().enumerate() {
                if i > 0 {
                    s.push('\n');
                }
                s.push_str(&format!("== {} ==\n", label(l)));
                s.push_str(&emit_report(r, format));
            }
            s
        }
    }
}

pub fn render_iterations(groups: &[Group]) -> String {
    let rows = |g: &Group| iteration_csv(&accuracy_by_iteration(&completed(g)));
    if groups.iter().all(|g| g.label.is_none()) {
        let all: Vec<Trajectory> = groups.iter().flat_map(completed).collect();
        return iteration_csv(&accuracy_by_iteration(&all));
    }
    prefixed(groups.iter().map(|g| (g.label.clone().unwrap_or_default(), rows(g))))
}

/// Joins CSV blocks that share a header, adding a leading run_label column.
fn prefixed(blocks: impl Iterator<Item = (String, String)>) -> String {
    let mut out = String::new();
    for (i, (label, csv)) in blocks.enumerate() {
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            out.push_str(&format!("run_label,{header}\n"));
        }
        for line in lines {
            out.push_str(&format!("{label},{line}\n"));
        }
    }
    out
}

pub fn write(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| error::io(p.display(), e)),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| error::io("stdout", e))
        }
    }
}
