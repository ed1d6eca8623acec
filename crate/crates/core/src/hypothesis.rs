//! Candidate transitions with three-valued precondition labels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{goal_distance, DistanceWeights, EmbeddingError, EmbeddingProvider};
use crate::goal::GoalSpec;
use crate::state::{apply_effects, Effects, StateError, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Sat,
    Viol,
    Unk,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Precondition {
    pub p: String,
    pub label: Label,
}

impl Precondition {
    pub fn new(p: &str, label: Label) -> Self {
        Self { p: p.into(), label }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Proposed,
    Bridge,
    Composed(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    #[serde(default)]
    pub id: String,
    pub action: String,
    #[serde(default)]
    pub pre: Vec<Precondition>,
    #[serde(default)]
    pub eff: Effects,
    #[serde(default)]
    pub score: f64,
    #[serde(default)]
    pub provenance: Provenance,
    /// Propositions this hypothesis' effects establish when used as a bridge.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub establishes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HypothesisError {
    #[error("hypothesis `{0}` has an empty precondition")]
    EmptyProposition(String),
    #[error("hypothesis `{id}` has score {score} outside [0, 1]")]
    ScoreOutOfRange { id: String, score: String },
    #[error("hypothesis has an empty action")]
    EmptyAction,
    #[error("hypothesis `{id}` lists `{proposition}` more than once")]
    DuplicateProposition { id: String, proposition: String },
}

impl Hypothesis {
    pub fn new(id: &str, action: &str, pre: Vec<Precondition>, eff: Effects) -> Self {
        Self {
            id: id.into(),
            action: action.into(),
            pre,
            eff,
            score: 0.0,
            provenance: Provenance::Proposed,
            establishes: Vec::new(),
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn establishing(mut self, props: &[&str]) -> Self {
        self.establishes = props.iter().map(|p| String::from(*p)).collect();
        self
    }

    /// `U(w, h)`: propositions labelled Unk, in list order.
    pub fn unknowns(&self) -> Vec<&str> {
        self.pre.iter().filter(|p| p.label == Label::Unk).map(|p| p.p.as_str()).collect()
    }

    pub fn has_violation(&self) -> bool {
        self.pre.iter().any(|p| p.label == Label::Viol)
    }

    /// Φ(w, h): every precondition is Sat.
    pub fn eligible(&self) -> bool {
        self.pre.iter().all(|p| p.label == Label::Sat)
    }

    pub fn label_of(&self, proposition: &str) -> Option<Label> {
        self.pre.iter().find(|p| p.p == proposition).map(|p| p.label)
    }

    pub fn relabel(&mut self, proposition: &str, label: Label) {
        for p in self.pre.iter_mut().filter(|p| p.p == proposition) {
            p.label = label;
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        self.pre.iter().map(|p| p.label).collect()
    }

    pub fn validate(&self) -> Result<(), HypothesisError> {
        if self.action.trim().is_empty() {
            return Err(HypothesisError::EmptyAction);
        }
        if let Some(_p) = self.pre.iter().find(|p| p.p.trim().is_empty()) {
            return Err(HypothesisError::EmptyProposition(self.id.clone()));
        }
        for (i, p) in self.pre.iter().enumerate() {
            if self.pre[..i].iter().any(|q| q.p == p.p) {
                return Err(HypothesisError::DuplicateProposition { id: self.id.clone(), proposition: p.p.clone() });
            }
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(HypothesisError::ScoreOutOfRange {
                id: self.id.clone(),
                score: format!("{}", self.score),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub tau: f64,
    pub epsilon: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self { tau: 3.0, epsilon: 0.05 }
    }
}

impl ScoreParams {
    pub fn is_valid(&self) -> bool {
        self.tau.is_finite() && self.tau > 0.0 && (0.0..1.0).contains(&self.epsilon)
    }
}

/// `exp(−d / τ)`.
pub fn score_from_distance(d: f64, tau: f64) -> f64 {
    libm::exp(-d / tau)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("score undefined: {0}")]
    ScoreUndefined(StateError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Predicted progress of `h` from `at`: `exp(−D(apply(h, at), w*) / τ)`.
pub fn score_hypothesis(
    h: &Hypothesis,
    at: &WorldState,
    goal: &GoalSpec,
    params: &ScoreParams,
    weights: &DistanceWeights,
    embed: &dyn EmbeddingProvider,
) -> Result<f64, ScoreError> {
    let next = apply_effects(at, &h.eff).map_err(ScoreError::ScoreUndefined)?;
    let d = goal_distance(&next, goal, weights, embed)?;
    Ok(score_from_distance(d, params.tau))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("bridge `{bridge}` establishes none of `{main}`'s unknown preconditions")]
    NoBridgedPrecondition { bridge: String, main: String },
}

/// `bridge ⊕ main`: bridge effects first, then main's; established unknowns
/// become Sat; score is `min(bridge, main) · (1 − ε)`.
pub fn compose(
    bridge: &Hypothesis,
    main: &Hypothesis,
    params: &ScoreParams,
) -> Result<Hypothesis, ComposeError> {
    let established: Vec<&str> = main
        .unknowns()
        .into_iter()
        .filter(|u| bridge.establishes.iter().any(|e| e == u))
        .collect();
    if established.is_empty() {
        return Err(ComposeError::NoBridgedPrecondition {
            bridge: bridge.id.clone(),
            main: main.id.clone(),
        });
    }
    let mut pre: Vec<Precondition> = bridge.pre.clone();
    for p in &main.pre {
        if pre.iter().any(|q| q.p == p.p) {
            continue;
        }
        let label = if established.contains(&p.p.as_str()) { Label::Sat } else { p.label };
        pre.push(Precondition { p: p.p.clone(), label });
    }
    let mut establishes = main.establishes.clone();
    for e in &bridge.establishes {
        if !establishes.contains(e) {
            establishes.push(e.clone());
        }
    }
    Ok(Hypothesis {
        id: format!("{}+{}", bridge.id, main.id),
        action: format!("First {}, then {}", bridge.action, main.action),
        pre,
        eff: bridge.eff.then(&main.eff),
        score: bridge.score.min(main.score) * (1.0 - params.epsilon),
        provenance: Provenance::Composed(bridge.id.clone(), main.id.clone()),
        establishes,
    })
}
