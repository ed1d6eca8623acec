//! Acceptance gate: hard checks, distance screening and the pullback
//! certificate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SearchConfig;
use crate::distance::{goal_components, Components, EmbeddingError, EmbeddingProvider};
use crate::goal::{GoalSpec, HardConstraint};
use crate::hypothesis::{Hypothesis, Label};
use crate::state::{apply_effects, StateError, TimeState, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenThresholds {
    pub delta_r: f64,
    pub delta_s: f64,
    pub delta_l: f64,
    pub delta_t: f64,
}

impl Default for ScreenThresholds {
    fn default() -> Self {
        Self { delta_r: 1.5, delta_s: 0.7, delta_l: 2.0, delta_t: 3600.0 }
    }
}

impl ScreenThresholds {
    pub fn is_valid(&self) -> bool {
        [self.delta_r, self.delta_s, self.delta_l, self.delta_t]
            .iter()
            .all(|d| !d.is_nan() && *d >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenVerdicts {
    pub components: Components,
    pub resources: bool,
    pub structure: bool,
    pub logical: bool,
    pub temporal: bool,
    pub pass: bool,
}

/// Strict per-component threshold test on goal-projected distances.
pub fn distance_screen(
    w_f: &WorldState,
    goal: &GoalSpec,
    th: &ScreenThresholds,
    embed: &dyn EmbeddingProvider,
) -> Result<ScreenVerdicts, EmbeddingError> {
    let c = goal_components(w_f, goal, embed)?;
    Ok(screen_components(c, th))
}

pub fn screen_components(c: Components, th: &ScreenThresholds) -> ScreenVerdicts {
    let resources = c.resources < th.delta_r;
    let structure = c.structure < th.delta_s;
    let logical = c.logical < th.delta_l;
    let temporal = c.temporal < th.delta_t;
    ScreenVerdicts {
        components: c,
        resources,
        structure,
        logical,
        temporal,
        pass: resources && structure && logical && temporal,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    pub constraint: HardConstraint,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardVerdicts {
    pub resources: bool,
    pub structure: bool,
    pub logical: bool,
    pub temporal: bool,
    pub constraints: Vec<ConstraintVerdict>,
    pub pass: bool,
}

impl HardVerdicts {
    pub fn failed(&self) -> impl Iterator<Item = &HardConstraint> {
        self.constraints.iter().filter(|v| !v.holds).map(|v| &v.constraint)
    }
}

/// Evaluates every goal constraint against `w_f`; never consults distances.
pub fn hard_check(w_f: &WorldState, goal: &GoalSpec) -> HardVerdicts {
    let (mut resources, mut structure, mut logical, mut temporal) = (true, true, true, true);
    let mut constraints = Vec::with_capacity(goal.hard_constraints().len());
    for c in goal.hard_constraints() {
        let holds = c.holds(w_f);
        let slot = match c {
            HardConstraint::ResourceAtLeast { .. } => &mut resources,
            HardConstraint::StructureEquals { .. } => &mut structure,
            HardConstraint::Predicate { .. } => &mut logical,
            HardConstraint::Deadline { .. } => &mut temporal,
        };
        *slot &= holds;
        constraints.push(ConstraintVerdict { constraint: c.clone(), holds });
    }
    HardVerdicts {
        resources,
        structure,
        logical,
        temporal,
        constraints,
        pass: resources && structure && logical && temporal,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullbackWitness {
    pub meet_state: WorldState,
    pub resource_intersection: BTreeMap<String, u64>,
    pub predicate_conjunction: BTreeMap<String, bool>,
    pub structure_agreement: BTreeSet<String>,
    pub time_bound: TimeState,
}

/// Builds the meet state `P` of `w_f` and the goal target and returns it
/// when `P` is below `w_f` and meets every goal requirement.
pub fn pullback_verify(w_f: &WorldState, goal: &GoalSpec) -> Option<PullbackWitness> {
    let target = goal.target();
    let mut meet = WorldState::new();
    let mut resource_intersection = BTreeMap::new();
    for (k, have) in &w_f.resources {
        if let Some(want) = target.resources.get(k) {
            resource_intersection.insert(k.clone(), (*have).min(*want));
        }
        // min over the shared part plus the surplus of w_f
        meet.resources.insert(k.clone(), *have);
    }

    let mut predicate_conjunction = BTreeMap::new();
    let keys: BTreeSet<&String> = w_f.predicates.keys().chain(target.predicates.keys()).collect();
    for k in keys {
        let v = match target.predicates.get(k) {
            Some(want) => {
                let v = w_f.predicate(k) && *want;
                predicate_conjunction.insert(k.clone(), v);
                v
            }
            None => w_f.predicate(k),
        };
        meet.predicates.insert(k.clone(), v);
    }

    let mut structure_agreement = BTreeSet::new();
    for (k, want) in &target.structure {
        match w_f.structure.get(k) {
            Some(have) if have == want => {
                structure_agreement.insert(k.clone());
            }
            Some(_) => return None,
            None => {}
        }
    }
    for (k, v) in &w_f.structure {
        meet.structure.insert(k.clone(), v.clone());
    }

    let time_bound = TimeState::new(w_f.time.completion, goal.deadline());
    meet.time = time_bound;

    let below_w_f = meet.resources.iter().all(|(k, v)| *v <= w_f.resource(k))
        && meet.predicates.iter().all(|(k, v)| !*v || w_f.predicate(k));
    if !below_w_f || !hard_check(&meet, goal).pass {
        return None;
    }
    Some(PullbackWitness {
        meet_state: meet,
        resource_intersection,
        predicate_conjunction,
        structure_agreement,
        time_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub hypothesis: Hypothesis,
    /// State after applying `hypothesis`.
    pub state: WorldState,
}

/// `w0` followed by `(h_i, w_i)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanChain {
    pub initial: WorldState,
    #[serde(default)]
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("replay diverges from the recorded state at step {step}")]
    ReplayMismatch { step: usize },
    #[error("step {step} cannot be applied: {source}")]
    Inapplicable { step: usize, source: StateError },
}

impl PlanChain {
    pub fn new(initial: WorldState) -> Self {
        Self { initial, steps: Vec::new() }
    }

    /// Applies `h` to the current terminal state and records the result.
    pub fn push(&mut self, h: Hypothesis) -> Result<&WorldState, StateError> {
        let next = apply_effects(self.terminal(), &h.eff)?;
        self.steps.push(PlanStep { hypothesis: h, state: next });
        Ok(&self.steps.last().expect("just pushed").state)
    }

    pub fn terminal(&self) -> &WorldState {
        self.steps.last().map_or(&self.initial, |s| &s.state)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.hypothesis.action.clone()).collect()
    }

    pub fn states(&self) -> impl Iterator<Item = &WorldState> {
        core::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.state))
    }

    pub fn replay(&self) -> Result<(), ReplayError> {
        let mut at = self.initial.clone();
        for (i, s) in self.steps.iter().enumerate() {
            at = apply_effects(&at, &s.hypothesis.eff)
                .map_err(|source| ReplayError::Inapplicable { step: i, source })?;
            if at != s.state {
                return Err(ReplayError::ReplayMismatch { step: i });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// (i) every hypothesis fully resolved.
    Labels,
    /// (ii) hard checks at the terminal state, feasibility at intermediates.
    HardCheck,
    /// (iii) pullback witness.
    Pullback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub criterion: Criterion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub hard: HardVerdicts,
    pub screen: ScreenVerdicts,
    pub pullback: Option<PullbackWitness>,
    pub goal_distance: f64,
    pub within_delta_accept: bool,
    pub accepted: bool,
}

impl Certificate {
    pub fn hard_pass(&self) -> bool {
        self.hard.pass
    }

    pub fn screen_pass(&self) -> bool {
        self.screen.pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum Acceptance {
    Accepted(Certificate),
    Rejected(Rejection),
}

impl Acceptance {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Acceptance::Accepted(c) => Some(c),
            Acceptance::Rejected(_) => None,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, Acceptance::Accepted(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcceptError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Intermediate states only need to be reachable: non-negative inventory
/// (guaranteed by replay) and completion within the deadline.
fn intermediate_feasible(w: &WorldState, goal: &GoalSpec) -> bool {
    w.time.completion <= goal.deadline()
}

pub fn accept(
    chain: &PlanChain,
    goal: &GoalSpec,
    cfg: &SearchConfig,
    embed: &dyn EmbeddingProvider,
) -> Result<Acceptance, AcceptError> {
    chain.replay()?;
    for (i, s) in chain.steps.iter().enumerate() {
        if let Some(p) = s.hypothesis.pre.iter().find(|p| p.label != Label::Sat) {
            let label = match p.label {
                Label::Unk => "unk",
                _ => "viol",
            };
            return Ok(Acceptance::Rejected(Rejection {
                criterion: Criterion::Labels,
                step: Some(i),
                detail: format!("`{}` labelled {label} in `{}`", p.p, s.hypothesis.id),
            }));
        }
    }
    let n = chain.steps.len();
    for (i, w) in chain.states().enumerate().take(n) {
        if !intermediate_feasible(w, goal) {
            return Ok(Acceptance::Rejected(Rejection {
                criterion: Criterion::HardCheck,
                step: Some(i),
                detail: format!("completion {} exceeds deadline {}", w.time.completion, goal.deadline()),
            }));
        }
    }
    let w_f = chain.terminal();
    let hard = hard_check(w_f, goal);
    if !hard.pass {
        let failed: Vec<String> = hard.failed().map(|c| format!("{c:?}")).collect();
        return Ok(Acceptance::Rejected(Rejection {
            criterion: Criterion::HardCheck,
            step: None,
            detail: failed.join("; "),
        }));
    }
    let Some(witness) = pullback_verify(w_f, goal) else {
        return Ok(Acceptance::Rejected(Rejection {
            criterion: Criterion::Pullback,
            step: None,
            detail: "no compatible meet state".into(),
        }));
    };
    let components = goal_components(w_f, goal, embed)?;
    let d = components.weighted(&cfg.weights);
    Ok(Acceptance::Accepted(Certificate {
        hard,
        screen: screen_components(components, &cfg.screen),
        pullback: Some(witness),
        goal_distance: d,
        within_delta_accept: d < cfg.delta_accept(),
        accepted: true,
    }))
}
