//! Resolution of Unk preconditions.
//!
//! Unknowns are handled in precondition-list order. For each unknown `p` the
//! refiner first tries up to `t_bridge` bridging steps (a bridge attempt, or a
//! query/bridge spent while recursively refining a bridge's own unknowns),
//! then issues exactly one query. A refuting answer discards the hypothesis,
//! as does a non-informative one. Total work per call is bounded by
//! `|U| · (t_bridge + 1)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::goal::GoalSpec;
use crate::hypothesis::{compose, Hypothesis, Label, ScoreParams};
use crate::oracle::{default_question, Oracle, OracleError, Query, Verdict};
use crate::proposer::{ProposalKind, ProposalRequest, Proposer, ProposerError};
use crate::state::{apply_effects, WorldState};
use crate::trace::{RefineAction, TraceEvent, TraceSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementBudget {
    pub t_bridge: u32,
}

impl RefinementBudget {
    pub const QUERIES_PER_UNKNOWN: u32 = 1;

    pub fn new(t_bridge: u32) -> Self {
        Self { t_bridge }
    }

    /// Theorem-1 style cap on bridge attempts plus queries for `unknowns`.
    pub fn step_bound(&self, unknowns: usize) -> u64 {
        unknowns as u64 * (u64::from(self.t_bridge) + u64::from(Self::QUERIES_PER_UNKNOWN))
    }
}

/// `⟨state, proposition, labels, bridge effect summary⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RefinementSignature {
    pub state_id: u64,
    pub proposition: String,
    pub pre_labels: Vec<Label>,
    pub eff_summary: String,
}

impl RefinementSignature {
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.state_id.to_le_bytes());
        h.update((self.proposition.len() as u64).to_le_bytes());
        h.update(self.proposition.as_bytes());
        for l in &self.pre_labels {
            h.update([*l as u8]);
        }
        h.update([0xff]);
        h.update(self.eff_summary.as_bytes());
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
    }
}

pub fn signature(at: &WorldState, p: &str, h: &Hypothesis, bridge: &Hypothesis) -> RefinementSignature {
    RefinementSignature {
        state_id: at.state_id(),
        proposition: p.into(),
        pre_labels: h.labels(),
        eff_summary: bridge.eff.canonical_text(),
    }
}

/// Hash-bucketed signature set; buckets keep full tuples so a digest
/// collision never reports a false cycle.
#[derive(Debug, Clone, Default)]
pub struct SignatureSet {
    buckets: BTreeMap<u64, Vec<RefinementSignature>>,
    len: usize,
}

impl SignatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the signature was already present.
    pub fn insert(&mut self, sig: RefinementSignature) -> bool {
        let bucket = self.buckets.entry(sig.digest()).or_default();
        if bucket.contains(&sig) {
            return false;
        }
        bucket.push(sig);
        self.len += 1;
        true
    }

    pub fn contains(&self, sig: &RefinementSignature) -> bool {
        self.buckets.get(&sig.digest()).is_some_and(|b| b.contains(sig))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    ViolatedPrecondition,
    Unresolvable,
    NonInformativeQuery,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Resolution {
    Resolved(Hypothesis),
    Discarded { reason: DiscardReason, proposition: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOutcome {
    pub resolution: Resolution,
    pub bridge_attempts: u32,
    pub queries_issued: u32,
    /// Bridge hypotheses returned by the proposer during this call.
    pub bridges_proposed: u32,
}

impl RefinementOutcome {
    pub fn steps(&self) -> u64 {
        u64::from(self.bridge_attempts) + u64::from(self.queries_issued)
    }

    pub fn resolved(&self) -> Option<&Hypothesis> {
        match &self.resolution {
            Resolution::Resolved(h) => Some(h),
            Resolution::Discarded { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefineError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
}

/// Everything a refinement call needs besides the hypothesis itself.
pub struct RefineContext<'a> {
    pub at: &'a WorldState,
    pub goal: &'a GoalSpec,
    pub oracle: &'a mut dyn Oracle,
    pub proposer: &'a mut dyn Proposer,
    pub budget: RefinementBudget,
    /// Maximum recursion depth when refining a bridge's own unknowns.
    pub max_depth: u32,
    pub params: ScoreParams,
    /// Scores a freshly proposed bridge; `None` marks it infeasible.
    pub scorer: &'a dyn Fn(&Hypothesis) -> Option<f64>,
    /// Check that `bridge` then `main` applies at `at` within the deadline.
    pub check_feasibility: bool,
    pub questions: &'a BTreeMap<String, String>,
    pub instance_id: &'a str,
    pub query_seq: &'a mut u64,
    pub hints: &'a mut Vec<String>,
    pub sink: &'a mut dyn TraceSink,
}

#[derive(Default)]
struct Counters {
    bridge_attempts: u32,
    queries_issued: u32,
    bridges_proposed: u32,
}

pub fn refine(h: &Hypothesis, ctx: &mut RefineContext<'_>) -> Result<RefinementOutcome, RefineError> {
    let mut counters = Counters::default();
    let mut sigs = SignatureSet::new();
    let resolution = if let Some(p) = h.pre.iter().find(|p| p.label == Label::Viol) {
        Resolution::Discarded { reason: DiscardReason::ViolatedPrecondition, proposition: p.p.clone() }
    } else if h.unknowns().is_empty() {
        Resolution::Resolved(h.clone())
    } else {
        resolve(h.clone(), 0, None, ctx, &mut counters, &mut sigs)?
    };
    Ok(RefinementOutcome {
        resolution,
        bridge_attempts: counters.bridge_attempts,
        queries_issued: counters.queries_issued,
        bridges_proposed: counters.bridges_proposed,
    })
}

fn step(ctx: &mut RefineContext<'_>, unknown: &str, action: RefineAction, bridge: Option<&str>, hit: bool, outcome: &str) {
    ctx.sink.emit(TraceEvent::RefineStep {
        unknown: unknown.into(),
        action_taken: action,
        bridge: bridge.map(Into::into),
        signature_hit: hit,
        outcome: outcome.into(),
    });
}

fn discard(ctx: &mut RefineContext<'_>, p: &str, reason: DiscardReason) -> Resolution {
    let outcome = match reason {
        DiscardReason::ViolatedPrecondition => "violated_precondition",
        DiscardReason::Unresolvable => "unresolvable",
        DiscardReason::NonInformativeQuery => "non_informative_query",
    };
    step(ctx, p, RefineAction::Discard, None, false, outcome);
    Resolution::Discarded { reason, proposition: p.into() }
}

/// `pool` is `None` at the top level (each unknown gets a fresh pool of
/// `t_bridge` steps and a free final query) and `Some` inside a recursive
/// bridge refinement, where every step is charged to the caller's pool.
fn resolve(
    h: Hypothesis,
    depth: u32,
    mut pool: Option<&mut u32>,
    ctx: &mut RefineContext<'_>,
    counters: &mut Counters,
    sigs: &mut SignatureSet,
) -> Result<Resolution, RefineError> {
    let mut current = h;
    let top = pool.is_none();
    let unknowns: Vec<String> = current.unknowns().into_iter().map(ToString::to_string).collect();
    for p in unknowns {
        if current.label_of(&p) != Some(Label::Unk) {
            continue;
        }
        let mut top_pool = ctx.budget.t_bridge;
        let steps: &mut u32 = match pool.as_deref_mut() {
            Some(shared) => shared,
            None => &mut top_pool,
        };
        if *steps > 0 {
            if let Some(composed) = bridge_phase(&current, &p, depth, steps, ctx, counters, sigs)? {
                current = composed;
            }
        }
        if current.label_of(&p) != Some(Label::Unk) {
            continue;
        }
        if !top {
            if *steps == 0 {
                return Ok(discard(ctx, &p, DiscardReason::Unresolvable));
            }
            *steps -= 1;
        }
        counters.queries_issued += 1;
        *ctx.query_seq += 1;
        let query = Query {
            proposition: p.clone(),
            question: ctx.questions.get(&p).cloned().unwrap_or_else(|| default_question(&p)),
            instance_id: ctx.instance_id.into(),
            sequence_no: *ctx.query_seq,
        };
        ctx.sink.emit(TraceEvent::QueryIssued { query: query.clone() });
        let answer = ctx.oracle.answer(&query)?;
        ctx.sink.emit(TraceEvent::AnswerReceived { proposition: p.clone(), answer: answer.clone() });
        ctx.hints.extend(answer.substitutions.iter().cloned());
        match answer.verdict {
            Verdict::Affirm => {
                current.relabel(&p, Label::Sat);
                step(ctx, &p, RefineAction::Query, None, false, "sat");
            }
            Verdict::Refute => {
                current.relabel(&p, Label::Viol);
                step(ctx, &p, RefineAction::Query, None, false, "viol");
                return Ok(discard(ctx, &p, DiscardReason::ViolatedPrecondition));
            }
            Verdict::Unknown => {
                step(ctx, &p, RefineAction::Query, None, false, "unknown");
                return Ok(discard(ctx, &p, DiscardReason::NonInformativeQuery));
            }
        }
    }
    debug_assert!(current.eligible());
    Ok(Resolution::Resolved(current))
}

/// Tries bridges for `p`; returns the composition with the first accepted one.
fn bridge_phase(
    current: &Hypothesis,
    p: &str,
    depth: u32,
    steps: &mut u32,
    ctx: &mut RefineContext<'_>,
    counters: &mut Counters,
    sigs: &mut SignatureSet,
) -> Result<Option<Hypothesis>, RefineError> {
    let mut req = ProposalRequest::new(
        ctx.at.clone(),
        ctx.goal.clone(),
        ProposalKind::Bridge(p.into()),
        *steps as usize,
    )?;
    req.hints = ctx.hints.clone();
    let bridges = ctx.proposer.propose(&req)?;
    counters.bridges_proposed += bridges.len() as u32;
    for mut b in bridges {
        if *steps == 0 {
            break;
        }
        *steps -= 1;
        counters.bridge_attempts += 1;
        if !sigs.insert(signature(ctx.at, p, current, &b)) {
            step(ctx, p, RefineAction::Bridge, Some(&b.id), true, "cycle");
            break;
        }
        if b.validate().is_err() || !b.establishes.iter().any(|e| e == p) {
            step(ctx, p, RefineAction::Bridge, Some(&b.id), false, "malformed");
            continue;
        }
        match (ctx.scorer)(&b) {
            Some(s) => b.score = s,
            None => {
                step(ctx, p, RefineAction::Bridge, Some(&b.id), false, "infeasible");
                continue;
            }
        }
        if b.has_violation() {
            step(ctx, p, RefineAction::Bridge, Some(&b.id), false, "violated");
            continue;
        }
        let resolved = if b.unknowns().is_empty() {
            b
        } else if depth + 1 > ctx.max_depth {
            step(ctx, p, RefineAction::Bridge, Some(&b.id), false, "depth_exceeded");
            continue;
        } else {
            let id = b.id.clone();
            match resolve(b, depth + 1, Some(&mut *steps), ctx, counters, sigs)? {
                Resolution::Resolved(x) => x,
                Resolution::Discarded { .. } => {
                    step(ctx, p, RefineAction::Bridge, Some(&id), false, "bridge_discarded");
                    continue;
                }
            }
        };
        if ctx.check_feasibility && !composition_feasible(ctx.at, &resolved, current, ctx.goal) {
            step(ctx, p, RefineAction::Bridge, Some(&resolved.id), false, "infeasible");
            continue;
        }
        match compose(&resolved, current, &ctx.params) {
            Ok(c) => {
                step(ctx, p, RefineAction::Bridge, Some(&resolved.id), false, &format!("composed:{}", c.id));
                return Ok(Some(c));
            }
            Err(_) => {
                step(ctx, p, RefineAction::Bridge, Some(&resolved.id), false, "no_bridged_precondition");
            }
        }
    }
    Ok(None)
}

/// Bridge applies at `at`, main applies after it, both within the deadline.
pub fn composition_feasible(at: &WorldState, bridge: &Hypothesis, main: &Hypothesis, goal: &GoalSpec) -> bool {
    let Ok(mid) = apply_effects(at, &bridge.eff) else { return false };
    if mid.time.completion > goal.deadline() {
        return false;
    }
    let Ok(end) = apply_effects(&mid, &main.eff) else { return false };
    end.time.completion <= goal.deadline()
}
