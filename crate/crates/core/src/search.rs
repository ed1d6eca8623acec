//! Bidirectional search over forward states and backward requirements.
//!
//! Each frontier holds `(node, candidate)` entries ordered by candidate score
//! (descending) and then insertion order. Popping an entry is one expansion:
//! the candidate is refined, applied (forward) or regressed (backward), and
//! becomes an edge to a new node. New nodes are proposed at immediately and
//! tested for a meet against every node of the opposite graph.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ScoreSource, SearchConfig};
use crate::distance::{goal_distance, EmbeddingError, EmbeddingProvider};
use crate::goal::GoalSpec;
use crate::hypothesis::{score_from_distance, score_hypothesis, Hypothesis, ScoreError};
use crate::instance::{InstanceError, PlanningInstance};
use crate::oracle::Oracle;
use crate::proposer::{ProposalKind, ProposalRequest, Proposer, ProposerError};
use crate::refine::{refine, RefineContext, RefineError, Resolution};
use crate::state::{apply_effects, WorldState};
use crate::trace::{Direction, PruneReason, TraceEvent, TraceSink};
use crate::verifier::{accept, distance_screen, hard_check, AcceptError, Acceptance, Certificate, PlanChain};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Verifier(#[from] AcceptError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchCounters {
    pub expansions: u64,
    /// Candidates returned by forward and backward proposals.
    pub hypotheses_generated: u64,
    pub queries_issued: u64,
    pub bridges_attempted: u64,
    pub bridges_proposed: u64,
    pub verifier_calls: u64,
    pub inserted: u64,
    pub pruned: u64,
    pub discarded: u64,
    pub duplicates: u64,
    /// Candidates still on a frontier when the search stopped.
    pub pending: u64,
    pub meets: u64,
    pub deferred: u64,
}

impl SearchCounters {
    /// `generated = inserted + pruned + discarded + duplicates + pending`.
    pub fn decomposition_holds(&self) -> bool {
        self.hypotheses_generated
            == self.inserted + self.pruned + self.discarded + self.duplicates + self.pending
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    FrontierExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum SearchOutcome {
    Success { chain: PlanChain, certificate: Certificate },
    Failure { reason: FailureReason },
    Timeout { expansions: u64 },
}

impl SearchOutcome {
    pub fn status(&self) -> &'static str {
        match self {
            SearchOutcome::Success { .. } => "success",
            SearchOutcome::Failure { .. } => "failure",
            SearchOutcome::Timeout { .. } => "timeout",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, SearchOutcome::Success { .. })
    }

    pub fn chain(&self) -> Option<&PlanChain> {
        match self {
            SearchOutcome::Success { chain, .. } => Some(chain),
            _ => None,
        }
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            SearchOutcome::Success { certificate, .. } => Some(certificate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub hypothesis: Hypothesis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGraph {
    pub direction: Direction,
    pub nodes: usize,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub outcome: SearchOutcome,
    pub counters: SearchCounters,
    pub forward: SearchGraph,
    pub backward: SearchGraph,
}

/// `K^d · R^{u_max}`, saturating.
pub fn expansions_bound(cfg: &SearchConfig, depth: u32) -> u64 {
    let k = cfg.k_branch as u64;
    let r = u64::from(cfg.bridge_depth);
    let mut bound: u64 = 1;
    for _ in 0..depth {
        bound = bound.saturating_mul(k);
    }
    for _ in 0..cfg.u_max {
        bound = bound.saturating_mul(r);
    }
    bound
}

pub fn expansions_bound_check(counters: &SearchCounters, cfg: &SearchConfig, depth: u32) -> bool {
    counters.expansions <= expansions_bound(cfg, depth)
}

struct Entry {
    score: f64,
    seq: u64,
    node: usize,
    hypothesis: Hypothesis,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct ForwardNode {
    state: WorldState,
    parent: Option<(usize, Hypothesis)>,
}

/// `req` holds after applying the parent hypothesis iff the parent's
/// requirement holds.
struct BackwardNode {
    req: GoalSpec,
    parent: Option<(usize, Hypothesis)>,
}

enum Step {
    Discard,
    Prune,
    Duplicate,
    Inserted(usize),
}

struct Engine<'a> {
    instance: &'a PlanningInstance,
    cfg: &'a SearchConfig,
    oracle: &'a mut dyn Oracle,
    proposer: &'a mut dyn Proposer,
    embed: &'a dyn EmbeddingProvider,
    sink: &'a mut dyn TraceSink,
    questions: BTreeMap<String, String>,
    w0: WorldState,
    forward: Vec<ForwardNode>,
    backward: Vec<BackwardNode>,
    forward_seen: BTreeMap<WorldState, usize>,
    backward_seen: BTreeMap<GoalSpec, usize>,
    forward_edges: Vec<Edge>,
    backward_edges: Vec<Edge>,
    forward_frontier: BinaryHeap<Entry>,
    backward_frontier: BinaryHeap<Entry>,
    deferred: Vec<(usize, usize, PlanChain)>,
    counters: SearchCounters,
    seq: u64,
    query_seq: u64,
    hints: Vec<String>,
}

/// Runs one search session. Events are written to `sink` as they happen, so
/// an error leaves a partial trace behind.
pub fn run_search(
    instance: &PlanningInstance,
    cfg: &SearchConfig,
    oracle: &mut dyn Oracle,
    proposer: &mut dyn Proposer,
    embed: &dyn EmbeddingProvider,
    sink: &mut dyn TraceSink,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    instance.validate()?;
    let w0 = instance.start_state();
    let mut engine = Engine {
        instance,
        cfg,
        oracle,
        proposer,
        embed,
        sink,
        questions: instance.questions(),
        w0: w0.clone(),
        forward: Vec::new(),
        backward: Vec::new(),
        forward_seen: BTreeMap::new(),
        backward_seen: BTreeMap::new(),
        forward_edges: Vec::new(),
        backward_edges: Vec::new(),
        forward_frontier: BinaryHeap::new(),
        backward_frontier: BinaryHeap::new(),
        deferred: Vec::new(),
        counters: SearchCounters::default(),
        seq: 0,
        query_seq: 0,
        hints: Vec::new(),
    };
    engine.run(w0)
}

impl Engine<'_> {
    fn run(&mut self, w0: WorldState) -> Result<SearchResult, SearchError> {
        self.forward_seen.insert(w0.clone(), 0);
        self.forward.push(ForwardNode { state: w0, parent: None });
        self.backward_seen.insert(self.instance.goal.clone(), 0);
        self.backward.push(BackwardNode { req: self.instance.goal.clone(), parent: None });
        self.propose(Direction::Forward, 0)?;
        self.propose(Direction::Backward, 0)?;
        if let Some(found) = self.meets_for(Direction::Forward, 0)? {
            return self.finish(Some(found));
        }

        let mut turn = Direction::Forward;
        loop {
            if self.forward_frontier.is_empty() && self.backward_frontier.is_empty() {
                return self.finish(None);
            }
            if self.counters.expansions >= self.cfg.t_max {
                return self.finish(None);
            }
            if self.frontier(turn).is_empty() {
                turn = turn.flip();
            }
            let entry = self.frontier(turn).pop().expect("frontier checked non-empty");
            self.counters.expansions += 1;
            self.sink.emit(TraceEvent::Expansion {
                index: self.counters.expansions,
                direction: turn,
                node: entry.node,
                hypothesis: entry.hypothesis.id.clone(),
                score: entry.score,
            });
            if let Step::Inserted(node) = self.expand(turn, entry)? {
                self.propose(turn, node)?;
                if let Some(found) = self.meets_for(turn, node)? {
                    return self.finish(Some(found));
                }
            }
            turn = turn.flip();
        }
    }

    fn frontier(&mut self, dir: Direction) -> &mut BinaryHeap<Entry> {
        match dir {
            Direction::Forward => &mut self.forward_frontier,
            Direction::Backward => &mut self.backward_frontier,
        }
    }

    fn propose(&mut self, dir: Direction, node: usize) -> Result<(), SearchError> {
        let (at, goal, kind) = match dir {
            Direction::Forward => {
                (self.forward[node].state.clone(), self.instance.goal.clone(), ProposalKind::Forward)
            }
            Direction::Backward => {
                let req = self.backward[node].req.clone();
                (req.target().clone(), req, ProposalKind::Backward)
            }
        };
        let mut request = ProposalRequest::new(at, goal, kind, self.cfg.k_branch)?;
        request.hints = self.hints.clone();
        let mut candidates = self.proposer.propose(&request)?;
        candidates.truncate(self.cfg.k_branch);
        self.sink.emit(TraceEvent::Proposal {
            direction: dir,
            node,
            request: match dir {
                Direction::Forward => "forward".into(),
                Direction::Backward => "backward".into(),
            },
            hypotheses: candidates.iter().map(|h| h.id.clone()).collect(),
        });
        for mut h in candidates {
            self.counters.hypotheses_generated += 1;
            let score = self.candidate_score(dir, node, &h)?;
            h.score = score;
            self.seq += 1;
            let entry = Entry { score, seq: self.seq, node, hypothesis: h };
            self.frontier(dir).push(entry);
        }
        Ok(())
    }

    fn candidate_score(&self, dir: Direction, node: usize, h: &Hypothesis) -> Result<f64, SearchError> {
        if self.cfg.score_source == ScoreSource::Annotated && h.score > 0.0 {
            return Ok(h.score);
        }
        let cfg = self.cfg;
        match dir {
            Direction::Forward => {
                let at = &self.forward[node].state;
                match score_hypothesis(h, at, &self.instance.goal, &cfg.score, &cfg.weights, self.embed) {
                    Ok(s) => Ok(s),
                    Err(ScoreError::ScoreUndefined(_)) => Ok(0.0),
                    Err(ScoreError::Embedding(e)) => Err(e.into()),
                }
            }
            Direction::Backward => match self.backward[node].req.regress(&h.eff) {
                Some(prior) => {
                    let d = goal_distance(&self.w0, &prior, &cfg.weights, self.embed)?;
                    Ok(score_from_distance(d, cfg.score.tau))
                }
                None => Ok(0.0),
            },
        }
    }

    fn prune(&mut self, dir: Direction, h: &Hypothesis, reason: PruneReason) {
        self.sink.emit(TraceEvent::Prune {
            direction: dir,
            hypothesis: h.id.clone(),
            reason,
            score: h.score,
        });
    }

    fn expand(&mut self, dir: Direction, entry: Entry) -> Result<Step, SearchError> {
        let step = self.resolve_entry(dir, entry)?;
        match &step {
            Step::Discard => self.counters.discarded += 1,
            Step::Prune => self.counters.pruned += 1,
            Step::Duplicate => self.counters.duplicates += 1,
            Step::Inserted(_) => self.counters.inserted += 1,
        }
        Ok(step)
    }

    fn resolve_entry(&mut self, dir: Direction, entry: Entry) -> Result<Step, SearchError> {
        let h = entry.hypothesis;
        let node = entry.node;
        if h.validate().is_err() {
            self.prune(dir, &h, PruneReason::Malformed);
            return Ok(Step::Discard);
        }
        if h.has_violation() {
            self.prune(dir, &h, PruneReason::Violated);
            return Ok(Step::Discard);
        }
        if h.unknowns().len() > self.cfg.u_max {
            self.prune(dir, &h, PruneReason::TooManyUnknowns);
            return Ok(Step::Discard);
        }
        let h = if h.unknowns().is_empty() {
            h
        } else {
            match self.refine_at(dir, node, &h)? {
                Some(resolved) => resolved,
                None => {
                    self.prune(dir, &h, PruneReason::Refinement);
                    return Ok(Step::Discard);
                }
            }
        };
        if h.score < self.cfg.prune_floor {
            self.prune(dir, &h, PruneReason::BelowFloor);
            return Ok(Step::Prune);
        }
        match dir {
            Direction::Forward => {
                let at = &self.forward[node].state;
                let next = match apply_effects(at, &h.eff) {
                    Ok(n) if n.time.completion <= self.instance.goal.deadline() => n,
                    _ => {
                        self.prune(dir, &h, PruneReason::Infeasible);
                        return Ok(Step::Discard);
                    }
                };
                if self.forward_seen.contains_key(&next) {
                    self.prune(dir, &h, PruneReason::Duplicate);
                    return Ok(Step::Duplicate);
                }
                let idx = self.forward.len();
                self.forward_seen.insert(next.clone(), idx);
                self.forward.push(ForwardNode { state: next, parent: Some((node, h.clone())) });
                self.forward_edges.push(Edge { from: node, to: idx, hypothesis: h.clone() });
                self.sink.emit(TraceEvent::Insert { direction: dir, node: idx, parent: node, hypothesis: h });
                Ok(Step::Inserted(idx))
            }
            Direction::Backward => {
                let Some(prior) = self.backward[node].req.regress(&h.eff) else {
                    self.prune(dir, &h, PruneReason::Infeasible);
                    return Ok(Step::Discard);
                };
                if self.backward_seen.contains_key(&prior) {
                    self.prune(dir, &h, PruneReason::Duplicate);
                    return Ok(Step::Duplicate);
                }
                let idx = self.backward.len();
                self.backward_seen.insert(prior.clone(), idx);
                self.backward.push(BackwardNode { req: prior, parent: Some((node, h.clone())) });
                self.backward_edges.push(Edge { from: node, to: idx, hypothesis: h.clone() });
                self.sink.emit(TraceEvent::Insert { direction: dir, node: idx, parent: node, hypothesis: h });
                Ok(Step::Inserted(idx))
            }
        }
    }

    fn refine_at(&mut self, dir: Direction, node: usize, h: &Hypothesis) -> Result<Option<Hypothesis>, SearchError> {
        let at = match dir {
            Direction::Forward => self.forward[node].state.clone(),
            Direction::Backward => self.backward[node].req.target().clone(),
        };
        let cfg = self.cfg;
        let goal = &self.instance.goal;
        let embed = self.embed;
        let scorer = |b: &Hypothesis| -> Option<f64> {
            if cfg.score_source == ScoreSource::Annotated && b.score > 0.0 {
                return Some(b.score);
            }
            score_hypothesis(b, &at, goal, &cfg.score, &cfg.weights, embed).ok()
        };
        let mut ctx = RefineContext {
            at: &at,
            goal,
            oracle: &mut *self.oracle,
            proposer: &mut *self.proposer,
            budget: cfg.budget(),
            max_depth: cfg.bridge_depth,
            params: cfg.score,
            scorer: &scorer,
            check_feasibility: dir == Direction::Forward,
            questions: &self.questions,
            instance_id: &self.instance.id,
            query_seq: &mut self.query_seq,
            hints: &mut self.hints,
            sink: &mut *self.sink,
        };
        let out = refine(h, &mut ctx)?;
        self.counters.queries_issued += u64::from(out.queries_issued);
        self.counters.bridges_attempted += u64::from(out.bridge_attempts);
        self.counters.bridges_proposed += u64::from(out.bridges_proposed);
        Ok(match out.resolution {
            Resolution::Resolved(h) => Some(h),
            Resolution::Discarded { .. } => None,
        })
    }

    fn forward_path(&self, mut node: usize) -> Vec<Hypothesis> {
        let mut out = Vec::new();
        while let Some((parent, h)) = &self.forward[node].parent {
            out.push(h.clone());
            node = *parent;
        }
        out.reverse();
        out
    }

    /// Backward hypotheses from `node` to the goal, already in execution order.
    fn backward_path(&self, mut node: usize) -> Vec<Hypothesis> {
        let mut out = Vec::new();
        while let Some((parent, h)) = &self.backward[node].parent {
            out.push(h.clone());
            node = *parent;
        }
        out
    }

    fn joined_chain(&self, f: usize, b: usize) -> Option<PlanChain> {
        let mut chain = PlanChain::new(self.w0.clone());
        for h in self.forward_path(f).into_iter().chain(self.backward_path(b)) {
            chain.push(h).ok()?;
        }
        Some(chain)
    }

    /// Tests `node` against every node of the other graph; returns the first
    /// accepted chain.
    fn meets_for(&mut self, dir: Direction, node: usize) -> Result<Option<(PlanChain, Certificate)>, SearchError> {
        let pairs: Vec<(usize, usize)> = match dir {
            Direction::Forward => (0..self.backward.len()).map(|b| (node, b)).collect(),
            Direction::Backward => (0..self.forward.len()).map(|f| (f, node)).collect(),
        };
        for (f, b) in pairs {
            if !hard_check(&self.forward[f].state, &self.backward[b].req).pass {
                continue;
            }
            let Some(chain) = self.joined_chain(f, b) else { continue };
            self.counters.meets += 1;
            let screen = distance_screen(chain.terminal(), &self.instance.goal, &self.cfg.screen, self.embed)?;
            let deferred = self.cfg.screening && !screen.pass;
            self.sink.emit(TraceEvent::Meet { forward: f, backward: b, screen, deferred });
            if deferred {
                self.counters.deferred += 1;
                self.deferred.push((f, b, chain));
                continue;
            }
            if let Some(cert) = self.verify(f, b, &chain)? {
                return Ok(Some((chain, cert)));
            }
        }
        Ok(None)
    }

    fn verify(&mut self, f: usize, b: usize, chain: &PlanChain) -> Result<Option<Certificate>, SearchError> {
        self.counters.verifier_calls += 1;
        let verdict = accept(chain, &self.instance.goal, self.cfg, self.embed)?;
        let (certificate, rejection) = match verdict {
            Acceptance::Accepted(c) => (Some(c), None),
            Acceptance::Rejected(r) => (None, Some(r)),
        };
        self.sink.emit(TraceEvent::VerifierCall {
            forward: f,
            backward: b,
            accepted: certificate.is_some(),
            certificate: certificate.clone(),
            rejection,
        });
        Ok(certificate)
    }

    fn finish(&mut self, found: Option<(PlanChain, Certificate)>) -> Result<SearchResult, SearchError> {
        let mut found = found;
        if found.is_none() {
            for (f, b, chain) in core::mem::take(&mut self.deferred) {
                if let Some(cert) = self.verify(f, b, &chain)? {
                    found = Some((chain, cert));
                    break;
                }
            }
        }
        self.counters.pending = (self.forward_frontier.len() + self.backward_frontier.len()) as u64;
        let outcome = match found {
            Some((chain, certificate)) => SearchOutcome::Success { chain, certificate },
            None if self.forward_frontier.is_empty() && self.backward_frontier.is_empty() => {
                SearchOutcome::Failure { reason: FailureReason::FrontierExhausted }
            }
            None => SearchOutcome::Timeout { expansions: self.counters.expansions },
        };
        self.sink.emit(TraceEvent::Outcome {
            status: outcome.status().to_string(),
            expansions: self.counters.expansions,
            queries_issued: self.counters.queries_issued,
            hypotheses_generated: self.counters.hypotheses_generated,
            verifier_calls: self.counters.verifier_calls,
            plan: outcome.chain().map(PlanChain::actions),
        });
        Ok(SearchResult {
            outcome,
            counters: self.counters,
            forward: SearchGraph {
                direction: Direction::Forward,
                nodes: self.forward.len(),
                edges: core::mem::take(&mut self.forward_edges),
            },
            backward: SearchGraph {
                direction: Direction::Backward,
                nodes: self.backward.len(),
                edges: core::mem::take(&mut self.backward_edges),
            },
        })
    }
}
