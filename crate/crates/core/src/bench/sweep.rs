//! Sweep over (instance, k, seed) cells and report aggregation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{bleu, plan_text, rouge_n};
use super::reveal::{apply_reveal, k_reveal, RevealVariant};
use super::violation::chain_violates;
use crate::instance::PlanningInstance;
use crate::search::{SearchCounters, SearchResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SweepError {
    #[error("no instances to sweep")]
    EmptyReport,
}

/// Which reveal counts to run per instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KSelection {
    /// Every `k` in `0..=m`.
    All,
    /// Listed values; those above an instance's `m` are skipped for it.
    Only(Vec<usize>),
}

impl KSelection {
    pub fn values(&self, m: usize) -> Vec<usize> {
        match self {
            KSelection::All => (0..=m).collect(),
            KSelection::Only(ks) => {
                let mut v: Vec<usize> = ks.iter().copied().filter(|k| *k <= m).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

/// What a planner hands back for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerRun {
    pub result: SearchResult,
    /// Invocations observed on the oracle, when the planner tracks them.
    pub oracle_calls: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub k: usize,
    pub seed: u64,
    pub hidden: usize,
    pub status: String,
    pub plan: Vec<String>,
    pub resource_violation: bool,
    pub rouge1: f64,
    pub rouge2: f64,
    pub bleu: f64,
    pub queries: u64,
    /// Frontier proposals plus bridge proposals.
    pub hypotheses: u64,
    pub expansions: u64,
    pub verifier_calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_calls: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAggregate {
    pub level: usize,
    pub runs: usize,
    pub mean_queries: f64,
    pub mean_hypotheses: f64,
    pub violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<RunRecord>,
    /// Aggregates keyed by hidden-precondition count `m − k`.
    pub by_hidden: Vec<LevelAggregate>,
    pub by_k: Vec<LevelAggregate>,
    /// Percentage of runs whose plan violates the true inventory.
    pub violation_rate: f64,
    pub success_rate: f64,
    pub mean_rouge1: f64,
    pub mean_rouge2: f64,
    pub mean_bleu: f64,
    pub mean_queries: f64,
    pub mean_hypotheses: f64,
    pub errors: usize,
    /// Inputs that could not be loaded; filled in by the caller.
    #[serde(default)]
    pub skipped: Vec<String>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

fn aggregate(runs: &[RunRecord], key: impl Fn(&RunRecord) -> usize) -> Vec<LevelAggregate> {
    let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(level, rs)| LevelAggregate {
            level,
            runs: rs.len(),
            mean_queries: mean(rs.iter().map(|r| r.queries as f64)),
            mean_hypotheses: mean(rs.iter().map(|r| r.hypotheses as f64)),
            violation_rate: percent(rs.iter().filter(|r| r.resource_violation).count(), rs.len()),
        })
        .collect()
}

/// Scores one finished cell against the instance's ground truth.
pub fn record_run(inst: &PlanningInstance, variant: &RevealVariant, run: &PlannerRun) -> RunRecord {
    let r = &run.result;
    let chain = r.outcome.chain();
    let plan = chain.map(|c| c.actions()).unwrap_or_default();
    let reference = plan_text(&inst.reference_plan);
    let candidate = plan_text(&plan);
    let overlap = |f: &dyn Fn(&str, &str) -> Result<f64, super::metrics::MetricError>| {
        f(&candidate, &reference).unwrap_or(0.0)
    };
    RunRecord {
        instance_id: inst.id.clone(),
        k: variant.k,
        seed: variant.seed,
        hidden: variant.hidden_count(),
        status: r.outcome.status().into(),
        resource_violation: chain.is_some_and(|c| chain_violates(c, inst)),
        rouge1: overlap(&|c, r| rouge_n(c, r, 1)),
        rouge2: overlap(&|c, r| rouge_n(c, r, 2)),
        bleu: overlap(&|c, r| bleu(c, r)),
        plan,
        queries: r.counters.queries_issued,
        hypotheses: r.counters.hypotheses_generated + r.counters.bridges_proposed,
        expansions: r.counters.expansions,
        verifier_calls: r.counters.verifier_calls,
        oracle_calls: run.oracle_calls,
        error: None,
    }
}

fn error_record(inst: &PlanningInstance, variant: &RevealVariant, error: String) -> RunRecord {
    let c = SearchCounters::default();
    RunRecord {
        instance_id: inst.id.clone(),
        k: variant.k,
        seed: variant.seed,
        hidden: variant.hidden_count(),
        status: "error".into(),
        plan: Vec::new(),
        resource_violation: false,
        rouge1: 0.0,
        rouge2: 0.0,
        bleu: 0.0,
        queries: c.queries_issued,
        hypotheses: c.hypotheses_generated + c.bridges_proposed,
        expansions: c.expansions,
        verifier_calls: c.verifier_calls,
        oracle_calls: None,
        error: Some(error),
    }
}

pub fn build_report(runs: Vec<RunRecord>) -> RunReport {
    let n = runs.len();
    RunReport {
        by_hidden: aggregate(&runs, |r| r.hidden),
        by_k: aggregate(&runs, |r| r.k),
        violation_rate: percent(runs.iter().filter(|r| r.resource_violation).count(), n),
        success_rate: percent(runs.iter().filter(|r| r.status == "success").count(), n),
        mean_rouge1: mean(runs.iter().map(|r| r.rouge1)),
        mean_rouge2: mean(runs.iter().map(|r| r.rouge2)),
        mean_bleu: mean(runs.iter().map(|r| r.bleu)),
        mean_queries: mean(runs.iter().map(|r| r.queries as f64)),
        mean_hypotheses: mean(runs.iter().map(|r| r.hypotheses as f64)),
        errors: runs.iter().filter(|r| r.error.is_some()).count(),
        runs,
        skipped: Vec::new(),
    }
}

/// Runs every (instance, k, seed) cell in that order. The planner receives
/// the revealed instance; a planner error is recorded and the sweep goes on.
pub fn run_sweep(
    instances: &[PlanningInstance],
    ks: &KSelection,
    seeds: &[u64],
    planner: &mut dyn FnMut(&PlanningInstance, &RevealVariant) -> Result<PlannerRun, String>,
) -> Result<RunReport, SweepError> {
    if instances.is_empty() {
        return Err(SweepError::EmptyReport);
    }
    let mut runs = Vec::new();
    for inst in instances {
        for k in ks.values(inst.latent_count()) {
            for &seed in seeds {
                let variant = k_reveal(inst, k, seed).expect("k drawn from 0..=m");
                let revealed = apply_reveal(inst, &variant);
                let record = match planner(&revealed, &variant) {
                    Ok(run) => record_run(inst, &variant, &run),
                    Err(e) => error_record(inst, &variant, e),
                };
                runs.push(record);
            }
        }
    }
    Ok(build_report(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_selection() {
        assert_eq!(KSelection::All.values(2), [0, 1, 2]);
        assert_eq!(KSelection::Only(alloc::vec![3, 1, 1, 9]).values(4), [1, 3]);
    }

    #[test]
    fn empty_sweep() {
        let mut planner = |_: &PlanningInstance, _: &RevealVariant| -> Result<PlannerRun, String> { Err("x".into()) };
        assert_eq!(run_sweep(&[], &KSelection::All, &[0], &mut planner), Err(SweepError::EmptyReport));
    }

    #[test]
    fn rates() {
        assert_eq!(percent(1, 4), 25.0);
        assert_eq!(percent(0, 0), 0.0);
        assert_eq!(mean([1.0, 2.0].into_iter()), 1.5);
    }
}
