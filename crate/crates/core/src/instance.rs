//! Benchmark unit: initial state, goal, latent preconditions and a
//! reference plan.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goal::{GoalError, GoalSpec};
use crate::oracle::GroundTruth;
use crate::state::{StateError, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("instance id is empty")]
    EmptyId,
    #[error("initial state: {0}")]
    State(#[from] StateError),
    #[error("goal: {0}")]
    Goal(#[from] GoalError),
    #[error("initial completion {completion} is past the goal deadline {deadline}")]
    StartsLate { completion: u64, deadline: u64 },
    #[error("latent precondition `{0}` listed twice")]
    DuplicateLatent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningInstance {
    pub id: String,
    #[serde(default)]
    pub minimal_prompt: String,
    #[serde(default)]
    pub full_prompt: String,
    pub initial: WorldState,
    pub goal: GoalSpec,
    #[serde(default)]
    pub latent_preconditions: GroundTruth,
    #[serde(default)]
    pub reference_plan: Vec<String>,
    /// Length of the shortest accepted chain, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_depth: Option<u32>,
    /// Resources a free-text plan may mention but the true inventory lacks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unavailable_resources: Vec<String>,
}

impl PlanningInstance {
    pub fn new(id: &str, initial: WorldState, goal: GoalSpec) -> Self {
        Self {
            id: id.into(),
            minimal_prompt: String::new(),
            full_prompt: String::new(),
            initial,
            goal,
            latent_preconditions: GroundTruth::default(),
            reference_plan: Vec::new(),
            solution_depth: None,
            unavailable_resources: Vec::new(),
        }
    }

    /// Initial state with its deadline aligned to the goal's.
    pub fn start_state(&self) -> WorldState {
        let mut w = self.initial.clone();
        w.time.deadline = self.goal.deadline();
        w
    }

    pub fn latent_count(&self) -> usize {
        self.latent_preconditions.entries.len()
    }

    /// Question text per latent proposition, where the instance supplies one.
    pub fn questions(&self) -> BTreeMap<String, String> {
        self.latent_preconditions
            .entries
            .iter()
            .filter_map(|e| e.question.clone().map(|q| (e.p.clone(), q)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.id.is_empty() {
            return Err(InstanceError::EmptyId);
        }
        self.initial.validate()?;
        self.goal.validate()?;
        if self.initial.time.completion > self.goal.deadline() {
            return Err(InstanceError::StartsLate {
                completion: self.initial.time.completion,
                deadline: self.goal.deadline(),
            });
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for e in &self.latent_preconditions.entries {
            if !seen.insert(e.p.as_str()) {
                return Err(InstanceError::DuplicateLatent(e.p.clone()));
            }
        }
        Ok(())
    }
}
