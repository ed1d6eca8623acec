//! Hypothesis generation `H(w)`.
//!
//! [`ScriptedDomain`] is a rule file: each rule pairs a state pattern and a
//! direction with an ordered list of hypothesis templates. Templates may use
//! `{r:name}`, `{s:key}` and `{p:name}` slots in their action text, which are
//! filled from the state the request is made at.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goal::GoalSpec;
use crate::hypothesis::{Hypothesis, HypothesisError, Label, Provenance};
use crate::state::WorldState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalKind {
    Forward,
    Backward,
    Bridge(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalRequest {
    pub at: WorldState,
    pub goal: GoalSpec,
    pub kind: ProposalKind,
    max_candidates: usize,
    /// Substitutions surfaced by earlier oracle answers.
    pub hints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposerError {
    #[error("max_candidates must be at least 1")]
    ZeroCandidates,
    #[error("malformed domain: {0}")]
    MalformedDomain(String),
    #[error("proposer unavailable: {0}")]
    ProposerUnavailable(String),
}

impl ProposalRequest {
    pub fn new(at: WorldState, goal: GoalSpec, kind: ProposalKind, max_candidates: usize) -> Result<Self, ProposerError> {
        if max_candidates == 0 {
            return Err(ProposerError::ZeroCandidates);
        }
        Ok(Self { at, goal, kind, max_candidates, hints: Vec::new() })
    }

    pub fn max_candidates(&self) -> usize {
        self.max_candidates
    }
}

pub trait Proposer {
    fn propose(&mut self, req: &ProposalRequest) -> Result<Vec<Hypothesis>, ProposerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Forward,
    Backward,
    Bridge,
}

/// Conjunction of conditions on a state; empty pattern matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatePattern {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resources_at_least: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resources_at_most: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub predicates: BTreeMap<String, bool>,
    /// Like `predicates`, but an absent predicate never matches.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub known_predicates: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub structure: BTreeMap<String, String>,
}

impl StatePattern {
    pub fn matches(&self, w: &WorldState) -> bool {
        self.resources_at_least.iter().all(|(k, n)| w.resource(k) >= *n)
            && self.resources_at_most.iter().all(|(k, n)| w.resource(k) <= *n)
            && self.predicates.iter().all(|(k, v)| w.predicate(k) == *v)
            && self.known_predicates.iter().all(|(k, v)| w.predicates.get(k) == Some(v))
            && self.structure.iter().all(|(k, v)| w.structure.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(rename = "match", default)]
    pub pattern: StatePattern,
    pub kind: RuleKind,
    pub templates: Vec<Hypothesis>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedDomain {
    pub rules: Vec<Rule>,
}

impl ScriptedDomain {
    pub fn new(rules: Vec<Rule>) -> Result<Self, ProposerError> {
        let d = Self { rules };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), ProposerError> {
        for (i, rule) in self.rules.iter().enumerate() {
            for t in &rule.templates {
                t.validate().map_err(|e: HypothesisError| {
                    ProposerError::MalformedDomain(format!("rule {i}: {e}"))
                })?;
                if t.id.is_empty() {
                    return Err(ProposerError::MalformedDomain(format!("rule {i}: template without id")));
                }
                if rule.kind == RuleKind::Bridge && t.establishes.is_empty() {
                    return Err(ProposerError::MalformedDomain(format!(
                        "rule {i}: bridge template `{}` establishes nothing",
                        t.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Matching templates instantiated at `req.at`, in file order, truncated
    /// to K.
    pub fn propose(&self, req: &ProposalRequest) -> Vec<Hypothesis> {
        let wanted = match &req.kind {
            ProposalKind::Forward => RuleKind::Forward,
            ProposalKind::Backward => RuleKind::Backward,
            ProposalKind::Bridge(_) => RuleKind::Bridge,
        };
        let mut out = Vec::new();
        for rule in self.rules.iter().filter(|r| r.kind == wanted && r.pattern.matches(&req.at)) {
            for t in &rule.templates {
                if let ProposalKind::Bridge(target) = &req.kind {
                    if !t.establishes.iter().any(|e| e == target) {
                        continue;
                    }
                }
                if out.len() == req.max_candidates {
                    return out;
                }
                out.push(instantiate(t, &req.at, wanted));
            }
        }
        out
    }
}

impl Proposer for ScriptedDomain {
    fn propose(&mut self, req: &ProposalRequest) -> Result<Vec<Hypothesis>, ProposerError> {
        Ok(ScriptedDomain::propose(self, req))
    }
}

/// Fills slots and relabels Unk preconditions that the state already
/// records as predicates.
pub fn instantiate(template: &Hypothesis, at: &WorldState, kind: RuleKind) -> Hypothesis {
    let mut h = template.clone();
    h.action = fill_slots(&template.action, at);
    for v in h.eff.set_structure.values_mut() {
        *v = fill_slots(v, at);
    }
    for p in h.pre.iter_mut() {
        if p.label == Label::Unk {
            if let Some(known) = at.predicates.get(&p.p) {
                p.label = if *known { Label::Sat } else { Label::Viol };
            }
        }
    }
    if kind == RuleKind::Bridge {
        h.provenance = Provenance::Bridge;
    }
    h
}

fn fill_slots(text: &str, at: &WorldState) -> String {
    if !text.contains('{') {
        return text.into();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let Some(end) = tail.find('}') else {
            out.push_str(tail);
            return out;
        };
        let slot = &tail[1..end];
        let filled = match slot.split_once(':') {
            Some(("r", name)) => Some(format!("{}", at.resource(name))),
            Some(("s", key)) => Some(at.structure.get(key).cloned().unwrap_or_default()),
            Some(("p", name)) => Some(format!("{}", at.predicate(name))),
            _ => None,
        };
        match filled {
            Some(f) => out.push_str(&f),
            None => out.push_str(&tail[..=end]),
        }
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    out
}
