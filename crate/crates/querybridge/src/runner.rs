//! Single runs, plan verification and sweeps, with their output files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use querybridge_core::bench::reveal::{apply_reveal, k_reveal, RevealVariant};
use querybridge_core::bench::sweep::{run_sweep, KSelection, PlannerRun, RunReport, SweepError};
use querybridge_core::config::SearchConfig;
use querybridge_core::distance::HashedBagEmbedding;
use querybridge_core::instance::PlanningInstance;
use querybridge_core::oracle::{Oracle, ScriptedOracle};
use querybridge_core::proposer::{Proposer, ScriptedDomain};
use querybridge_core::search::{run_search, SearchCounters, SearchError, SearchOutcome, SearchResult};
use querybridge_core::trace::TraceSink;
use querybridge_core::verifier::{accept, AcceptError, Acceptance, Criterion, PlanChain, Rejection};

use crate::io::{write_json, JsonlSink, LoadedInstance};
use crate::report::write_report;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |err| RunError::Io { path: path.into(), err }
}

/// Contents of `plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub instance_id: String,
    pub status: String,
    #[serde(default)]
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<PlanChain>,
    pub counters: SearchCounters,
}

impl PlanFile {
    pub fn new(instance_id: &str, result: &SearchResult) -> Self {
        let chain = result.outcome.chain().cloned();
        Self {
            instance_id: instance_id.into(),
            status: result.outcome.status().into(),
            steps: chain.as_ref().map(|c| c.actions()).unwrap_or_default(),
            chain,
            counters: result.counters,
        }
    }
}

/// Exit status for a finished search.
pub fn exit_code(outcome: &SearchOutcome) -> i32 {
    match outcome {
        SearchOutcome::Success { .. } => 0,
        SearchOutcome::Failure { .. } => 2,
        SearchOutcome::Timeout { .. } => 3,
    }
}

/// The instance as the planner sees it under a `k`-reveal.
pub fn revealed(inst: &PlanningInstance, k: usize, seed: u64) -> Result<(PlanningInstance, RevealVariant), RunError> {
    let variant = k_reveal(inst, k, seed).map_err(|e| RunError::Usage(e.to_string()))?;
    Ok((apply_reveal(inst, &variant), variant))
}

/// Runs one search, streaming the trace to `sink`.
pub fn plan(
    inst: &PlanningInstance,
    cfg: &SearchConfig,
    oracle: &mut dyn Oracle,
    proposer: &mut dyn Proposer,
    sink: &mut dyn TraceSink,
) -> Result<SearchResult, SearchError> {
    run_search(inst, cfg, oracle, proposer, &HashedBagEmbedding::default(), sink)
}

/// Runs one search and writes `trace.jsonl`, `plan.json` and, on success,
/// `certificate.json` under `out_dir`. The trace is written even when the
/// search errors.
pub fn plan_to_dir(
    inst: &PlanningInstance,
    cfg: &SearchConfig,
    oracle: &mut dyn Oracle,
    proposer: &mut dyn Proposer,
    out_dir: &Path,
) -> Result<SearchResult, RunError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let trace_path = out_dir.join("trace.jsonl");
    let mut sink = JsonlSink::create(&trace_path).map_err(io_err(&trace_path))?;
    let result = plan(inst, cfg, oracle, proposer, &mut sink);
    sink.finish().map_err(io_err(&trace_path))?;
    let result = result?;
    let plan_path = out_dir.join("plan.json");
    write_json(&plan_path, &PlanFile::new(&inst.id, &result)).map_err(io_err(&plan_path))?;
    let cert_path = out_dir.join("certificate.json");
    match result.outcome.certificate() {
        Some(cert) => write_json(&cert_path, cert).map_err(io_err(&cert_path))?,
        None if cert_path.exists() => fs::remove_file(&cert_path).map_err(io_err(&cert_path))?,
        None => {}
    }
    Ok(result)
}

/// A plan file: either the `plan.json` written by a run or a bare chain.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PlanInput {
    File(PlanFile),
    Chain(PlanChain),
}

impl PlanInput {
    pub fn chain(&self) -> Option<&PlanChain> {
        match self {
            PlanInput::File(f) => f.chain.as_ref(),
            PlanInput::Chain(c) => Some(c),
        }
    }
}

/// Replays the chain's hypotheses from the instance's own start state and
/// applies the acceptance rule. The states recorded in the file are
/// ignored.
pub fn verify_plan(inst: &PlanningInstance, plan: &PlanInput, cfg: &SearchConfig) -> Result<Acceptance, AcceptError> {
    let Some(chain) = plan.chain() else {
        return Ok(Acceptance::Rejected(Rejection {
            criterion: Criterion::HardCheck,
            step: None,
            detail: "plan file holds no chain".into(),
        }));
    };
    let mut rebuilt = PlanChain::new(inst.start_state());
    for (i, step) in chain.steps.iter().enumerate() {
        if let Err(e) = rebuilt.push(step.hypothesis.clone()) {
            return Ok(Acceptance::Rejected(Rejection {
                criterion: Criterion::HardCheck,
                step: Some(i),
                detail: format!("`{}` is not applicable: {e}", step.hypothesis.id),
            }));
        }
    }
    accept(&rebuilt, &inst.goal, cfg, &HashedBagEmbedding::default())
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub ks: KSelection,
    pub seeds: Vec<u64>,
    /// Applied to every instance when set; otherwise each instance's own
    /// config, then the default.
    pub config: Option<SearchConfig>,
    pub t_max: Option<u64>,
}

pub fn trace_name(instance_id: &str, k: usize, seed: u64) -> String {
    format!("{instance_id}_{k}_{seed}.jsonl")
}

fn effective_config(li: &LoadedInstance, opts: &SweepOptions) -> SearchConfig {
    let mut cfg = opts.config.clone().or_else(|| li.config.clone()).unwrap_or_default();
    if let Some(t) = opts.t_max {
        cfg.t_max = t;
    }
    cfg
}

fn cell(
    inst: &PlanningInstance,
    domain: Option<&ScriptedDomain>,
    cfg: &SearchConfig,
    trace: Option<PathBuf>,
) -> Result<PlannerRun, String> {
    let Some(domain) = domain else {
        return Err("instance has no scripted domain".into());
    };
    let mut domain = domain.clone();
    let mut oracle = ScriptedOracle::new(inst.latent_preconditions.clone());
    let result = match trace {
        Some(path) => {
            let mut sink = JsonlSink::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let r = plan(inst, cfg, &mut oracle, &mut domain, &mut sink);
            sink.finish().map_err(|e| format!("{}: {e}", path.display()))?;
            r
        }
        None => plan(inst, cfg, &mut oracle, &mut domain, &mut querybridge_core::trace::NullSink),
    }
    .map_err(|e| e.to_string())?;
    Ok(PlannerRun { result, oracle_calls: Some(oracle.calls()) })
}

/// Sweeps every loaded instance with the scripted oracle. With `out_dir`,
/// per-cell traces go to `traces/` and the report files next to them.
pub fn sweep(
    instances: &[LoadedInstance],
    skipped: Vec<String>,
    opts: &SweepOptions,
    out_dir: Option<&Path>,
) -> Result<RunReport, SweepError> {
    if instances.is_empty() {
        return Err(SweepError::EmptyReport);
    }
    let mut runs = Vec::new();
    for li in instances {
        let cfg = effective_config(li, opts);
        let mut planner = |inst: &PlanningInstance, v: &RevealVariant| {
            let trace = out_dir.map(|d| d.join("traces").join(trace_name(&inst.id, v.k, v.seed)));
            cell(inst, li.domain.as_ref(), &cfg, trace)
        };
        let part = run_sweep(std::slice::from_ref(&li.instance), &opts.ks, &opts.seeds, &mut planner)?;
        runs.extend(part.runs);
    }
    let mut report = querybridge_core::bench::sweep::build_report(runs);
    report.skipped = skipped;
    Ok(report)
}

/// [`sweep`] followed by writing the report files.
pub fn sweep_to_dir(
    instances: &[LoadedInstance],
    skipped: Vec<String>,
    opts: &SweepOptions,
    out_dir: &Path,
) -> Result<RunReport, RunError> {
    let report = sweep(instances, skipped, opts, Some(out_dir)).map_err(|e| RunError::Usage(e.to_string()))?;
    write_report(out_dir, &report).map_err(io_err(out_dir))?;
    Ok(report)
}
