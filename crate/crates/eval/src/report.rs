//! Comparison tables across finished runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use guidedec::Backend;

use crate::harness::{read_results, RunReport, Timing, REPORT_FILE, RESULTS_FILE, TIMING_FILE};
use crate::metrics::aggregate;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no {REPORT_FILE} found under {0}")]
    NoRuns(String),
    #[error("{path}: {msg}")]
    Read { path: String, msg: String },
    #[error("{path}: report does not match the aggregates of {RESULTS_FILE}")]
    Inconsistent { path: String },
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub report: RunReport,
    pub timing: Option<Timing>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let err = |msg: String| ReportError::Read {
        path: path.display().to_string(),
        msg,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if dir.join(REPORT_FILE).is_file() {
        out.push(dir.to_path_buf());
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        find_reports(&d, out)?;
    }
    Ok(())
}

/// Every run directory at or below `dir`, in path order.
pub fn load_runs(dir: &Path) -> Result<Vec<LoadedRun>, ReportError> {
    let mut dirs = Vec::new();
    find_reports(dir, &mut dirs).map_err(|e| ReportError::Read {
        path: dir.display().to_string(),
        msg: e.to_string(),
    })?;
    if dirs.is_empty() {
        return Err(ReportError::NoRuns(dir.display().to_string()));
    }
    dirs.into_iter()
        .map(|d| {
            let report = read_json(&d.join(REPORT_FILE))?;
            let t = d.join(TIMING_FILE);
            let timing = if t.is_file() {
                Some(read_json(&t)?)
            } else {
                None
            };
            Ok(LoadedRun {
                dir: d,
                report,
                timing,
            })
        })
        .collect()
}

/// Recomputes the aggregates from the results file and compares them with
/// the stored report.
pub fn check_consistency(run: &LoadedRun) -> Result<(), ReportError> {
    let path = run.dir.join(RESULTS_FILE);
    let results = read_results(&path).map_err(|msg| ReportError::Read {
        path: path.display().to_string(),
        msg,
    })?;
    if aggregate(run.report.metrics.turns, &results) != run.report.metrics {
        return Err(ReportError::Inconsistent {
            path: run.dir.display().to_string(),
        });
    }
    Ok(())
}

pub fn turns_label(n: usize) -> String {
    match n {
        1 => "1-Turn".into(),
        n if n != 0 => format!("{n}-Turns"),
        _ => "0-Turn".into(),
    }
}

fn row_label(r: &RunReport) -> String {
    if r.target.starts_with("remote") {
        r.config.model.clone()
    } else {
        r.target.clone()
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn table(title: &str, runs: &[LoadedRun], cell: impl Fn(&RunReport) -> String) -> String {
    let mut cells: BTreeMap<(String, usize), BTreeMap<Backend, String>> = BTreeMap::new();
    for r in runs {
        cells
            .entry((row_label(&r.report), r.report.metrics.turns))
            .or_default()
            .insert(r.report.backend, cell(&r.report));
    }
    let mut out =
        format!("### {title}\n\n| Model | Turns | fsm | pda | enforcer |\n|---|---|---|---|---|\n");
    for ((label, turns), row) in &cells {
        let get = |b| row.get(&b).cloned().unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "| {label} | {} | {} | {} | {} |",
            turns_label(*turns),
            get(Backend::Fsm),
            get(Backend::Pda),
            get(Backend::Enforcer)
        );
    }
    out
}

/// Markdown tables: false-positive percentages per model and turn count
/// across the three backends (sample-level and reference-level), success
/// percentages, and mean seconds per sample per backend and target.
pub fn render(runs: &[LoadedRun]) -> String {
    let mut out = String::new();
    out.push_str(&table("False positive rate, sample-level (%)", runs, |r| {
        pct(r.metrics.fp_sample_rate)
    }));
    out.push('\n');
    out.push_str(&table(
        "False positive rate, reference-level (%)",
        runs,
        |r| pct(r.metrics.fp_reference_rate),
    ));
    out.push('\n');
    out.push_str(&table("Success rate (%)", runs, |r| {
        pct(r.metrics.success_rate)
    }));
    out.push('\n');

    let mut targets = BTreeSet::new();
    let mut secs: BTreeMap<(Backend, String), (f64, usize)> = BTreeMap::new();
    for r in runs {
        if let Some(t) = &r.timing {
            let label = row_label(&r.report);
            targets.insert(label.clone());
            let e = secs.entry((t.backend, label)).or_default();
            e.0 += t.mean_seconds * t.samples.len() as f64;
            e.1 += t.samples.len();
        }
    }
    out.push_str("### Mean seconds per sample\n\n| Backend |");
    for t in &targets {
        let _ = write!(out, " {t} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(targets.len()));
    out.push('\n');
    for b in Backend::CONSTRAINED {
        let _ = write!(out, "| {b} |");
        for t in &targets {
            match secs.get(&(b, t.clone())) {
                Some(&(sum, n)) if n > 0 => {
                    let _ = write!(out, " {:.6} |", sum / n as f64);
                }
                _ => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}
