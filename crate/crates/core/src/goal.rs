//! Goal specifications and exactly evaluable hard constraints.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{Effects, TimeState, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoalError {
    #[error("hard constraint on `{0}` does not match the goal target")]
    NotInTarget(String),
    #[error("deadline constraint {constraint} differs from target deadline {target}")]
    DeadlineMismatch { constraint: u64, target: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HardConstraint {
    /// `count(name) >= count` in the final inventory.
    ResourceAtLeast { name: String, count: u64 },
    /// Predicate must hold with the given truth value (absent reads false).
    Predicate { name: String, value: bool },
    StructureEquals { key: String, value: String },
    /// Completion time must not exceed `seconds`.
    Deadline { seconds: u64 },
}

impl HardConstraint {
    pub fn holds(&self, w: &WorldState) -> bool {
        match self {
            HardConstraint::ResourceAtLeast { name, count } => w.resource(name) >= *count,
            HardConstraint::Predicate { name, value } => w.predicate(name) == *value,
            HardConstraint::StructureEquals { key, value } => {
                w.structure.get(key).is_some_and(|v| v == value)
            }
            HardConstraint::Deadline { seconds } => w.time.completion <= *seconds,
        }
    }
}

/// Target state `w*` plus the hard constraints the plan must satisfy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "GoalSpecRepr", into = "GoalSpecRepr")]
pub struct GoalSpec {
    target: WorldState,
    hard_constraints: Vec<HardConstraint>,
}

#[derive(Serialize, Deserialize)]
struct GoalSpecRepr {
    target: WorldState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hard_constraints: Option<Vec<HardConstraint>>,
}

impl TryFrom<GoalSpecRepr> for GoalSpec {
    type Error = GoalError;

    fn try_from(repr: GoalSpecRepr) -> Result<Self, Self::Error> {
        match repr.hard_constraints {
            Some(cs) => GoalSpec::with_constraints(repr.target, cs),
            None => Ok(GoalSpec::new(repr.target)),
        }
    }
}

impl From<GoalSpec> for GoalSpecRepr {
    fn from(g: GoalSpec) -> Self {
        GoalSpecRepr { target: g.target, hard_constraints: Some(g.hard_constraints) }
    }
}

impl GoalSpec {
    /// Derives the full constraint set from the target: every resource count,
    /// every true predicate, every structure key and the deadline.
    pub fn new(target: WorldState) -> Self {
        let target = normalize(target);
        let hard_constraints = derive_constraints(&target);
        Self { target, hard_constraints }
    }

    pub fn with_constraints(
        target: WorldState,
        hard_constraints: Vec<HardConstraint>,
    ) -> Result<Self, GoalError> {
        let goal = Self { target: normalize(target), hard_constraints };
        goal.validate()?;
        Ok(goal)
    }

    pub fn target(&self) -> &WorldState {
        &self.target
    }

    pub fn hard_constraints(&self) -> &[HardConstraint] {
        &self.hard_constraints
    }

    pub fn deadline(&self) -> u64 {
        self.target.time.deadline
    }

    /// Every named resource, predicate and structure key must appear in the
    /// target with the same value.
    pub fn validate(&self) -> Result<(), GoalError> {
        for c in &self.hard_constraints {
            match c {
                HardConstraint::ResourceAtLeast { name, count } => {
                    if self.target.resources.get(name) != Some(count) {
                        return Err(GoalError::NotInTarget(name.clone()));
                    }
                }
                HardConstraint::Predicate { name, value } => {
                    if self.target.predicates.get(name) != Some(value) {
                        return Err(GoalError::NotInTarget(name.clone()));
                    }
                }
                HardConstraint::StructureEquals { key, value } => {
                    if self.target.structure.get(key) != Some(value) {
                        return Err(GoalError::NotInTarget(key.clone()));
                    }
                }
                HardConstraint::Deadline { seconds } => {
                    if *seconds != self.target.time.deadline {
                        return Err(GoalError::DeadlineMismatch {
                            constraint: *seconds,
                            target: self.target.time.deadline,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Requirement that must hold *before* `eff` so that this goal holds after
    /// it. `None` when the effect contradicts a requirement or the deadline
    /// cannot absorb its duration.
    pub fn regress(&self, eff: &Effects) -> Option<GoalSpec> {
        let deadline = self.deadline().checked_sub(eff.delta_time)?;
        let mut out: Vec<HardConstraint> = Vec::new();
        let mut seen_resources = alloc::collections::BTreeSet::new();
        for c in &self.hard_constraints {
            match c {
                HardConstraint::ResourceAtLeast { name, count } => {
                    seen_resources.insert(name.clone());
                    let delta = eff.delta_resources.get(name).copied().unwrap_or(0);
                    let need = (i128::from(*count) - i128::from(delta)).max(-i128::from(delta.min(0)));
                    if need > 0 {
                        out.push(HardConstraint::ResourceAtLeast { name: name.clone(), count: need as u64 });
                    }
                }
                HardConstraint::Predicate { name, value } => match eff.set_predicates.get(name) {
                    Some(v) if v == value => {}
                    Some(_) => return None,
                    None => out.push(c.clone()),
                },
                HardConstraint::StructureEquals { key, value } => match eff.set_structure.get(key) {
                    Some(v) if v == value => {}
                    Some(_) => return None,
                    None => out.push(c.clone()),
                },
                HardConstraint::Deadline { .. } => {}
            }
        }
        for (name, delta) in &eff.delta_resources {
            if *delta < 0 && !seen_resources.contains(name) {
                out.push(HardConstraint::ResourceAtLeast { name: name.clone(), count: delta.unsigned_abs() });
            }
        }
        out.push(HardConstraint::Deadline { seconds: deadline });
        out.sort();
        let target = target_from_constraints(&out, deadline);
        Some(GoalSpec { target, hard_constraints: out })
    }
}

fn normalize(mut target: WorldState) -> WorldState {
    target.time = TimeState::new(target.time.deadline, target.time.deadline);
    target
}

fn derive_constraints(target: &WorldState) -> Vec<HardConstraint> {
    let mut out = Vec::new();
    for (name, count) in &target.resources {
        out.push(HardConstraint::ResourceAtLeast { name: name.clone(), count: *count });
    }
    for (key, value) in &target.structure {
        out.push(HardConstraint::StructureEquals { key: key.clone(), value: value.clone() });
    }
    for (name, value) in &target.predicates {
        if *value {
            out.push(HardConstraint::Predicate { name: name.clone(), value: true });
        }
    }
    out.push(HardConstraint::Deadline { seconds: target.time.deadline });
    out
}

fn target_from_constraints(cs: &[HardConstraint], deadline: u64) -> WorldState {
    let mut w = WorldState::new().with_time(deadline, deadline);
    for c in cs {
        match c {
            HardConstraint::ResourceAtLeast { name, count } => {
                w.resources.insert(name.clone(), *count);
            }
            HardConstraint::Predicate { name, value } => {
                w.predicates.insert(name.clone(), *value);
            }
            HardConstraint::StructureEquals { key, value } => {
                w.structure.insert(key.clone(), value.clone());
            }
            HardConstraint::Deadline { .. } => {}
        }
    }
    w
}
