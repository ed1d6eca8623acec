//! Report files and the console summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use querybridge_core::bench::sweep::{RunRecord, RunReport};

use crate::io::write_json;

#[derive(Serialize)]
struct RunRow<'a> {
    instance_id: &'a str,
    k: usize,
    seed: u64,
    hidden: usize,
    status: &'a str,
    steps: usize,
    resource_violation: bool,
    rouge1: f64,
    rouge2: f64,
    bleu: f64,
    queries: u64,
    hypotheses: u64,
    expansions: u64,
    verifier_calls: u64,
    error: &'a str,
}

impl<'a> From<&'a RunRecord> for RunRow<'a> {
    fn from(r: &'a RunRecord) -> Self {
        Self {
            instance_id: &r.instance_id,
            k: r.k,
            seed: r.seed,
            hidden: r.hidden,
            status: &r.status,
            steps: r.plan.len(),
            resource_violation: r.resource_violation,
            rouge1: r.rouge1,
            rouge2: r.rouge2,
            bleu: r.bleu,
            queries: r.queries,
            hypotheses: r.hypotheses,
            expansions: r.expansions,
            verifier_calls: r.verifier_calls,
            error: r.error.as_deref().unwrap_or(""),
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    for row in rows {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// Writes `report.json`, `runs.csv` and `by_hidden.csv` into `dir`.
pub fn write_report(dir: &Path, report: &RunReport) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    write_csv(&dir.join("runs.csv"), report.runs.iter().map(RunRow::from))?;
    write_csv(&dir.join("by_hidden.csv"), report.by_hidden.iter())
}

pub fn summary_table(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>5} {:>12} {:>15} {:>11}", "hidden", "runs", "mean_queries", "mean_hypotheses", "violation%");
    for a in &report.by_hidden {
        let _ = writeln!(
            s,
            "{:>6} {:>5} {:>12.2} {:>15.2} {:>11.1}",
            a.level, a.runs, a.mean_queries, a.mean_hypotheses, a.violation_rate
        );
    }
    let _ = writeln!(
        s,
        "runs {}  success {:.1}%  violation {:.1}%  rouge1 {:.3}  rouge2 {:.3}  bleu {:.3}  errors {}  skipped {}",
        report.runs.len(),
        report.success_rate,
        report.violation_rate,
        report.mean_rouge1,
        report.mean_rouge2,
        report.mean_bleu,
        report.errors,
        report.skipped.len()
    );
    for sk in &report.skipped {
        let _ = writeln!(s, "skipped {sk}");
    }
    s
}
