//! Resource-violation check against an instance's true inventory.
//!
//! Native chains are replayed from the instance's full initial state. Free
//! text plans are graded by extraction: a step violates when it mentions a
//! resource listed in `unavailable_resources`, or writes `<count> <name>`
//! for an inventory resource with a count above what the inventory holds.
//! Names match on the shared tokenisation, so `table_legs` matches
//! "table legs".

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::PlanningInstance;
use crate::state::apply_effects;
use crate::text::tokenize;
use crate::verifier::PlanChain;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ViolationError {
    #[error("plan has no steps to grade")]
    UnparseablePlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationVerdict {
    pub violation: bool,
    /// Set when the plan could not be graded; such plans count as violating.
    pub flagged: bool,
}

/// Exact replay of the chain's effects from the instance's initial state.
pub fn chain_violates(chain: &PlanChain, inst: &PlanningInstance) -> bool {
    let mut at = inst.start_state();
    for step in &chain.steps {
        for name in step.hypothesis.eff.delta_resources.iter().filter(|(_, d)| **d < 0).map(|(n, _)| n) {
            if !at.resources.contains_key(name) {
                return true;
            }
        }
        match apply_effects(&at, &step.hypothesis.eff) {
            Ok(next) => at = next,
            Err(_) => return true,
        }
    }
    false
}

fn contains_seq(hay: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

fn step_violates(step: &str, inst: &PlanningInstance) -> bool {
    let tokens = tokenize(step);
    for name in &inst.unavailable_resources {
        if contains_seq(&tokens, &tokenize(name)).is_some() {
            return true;
        }
    }
    for (name, have) in &inst.initial.resources {
        let needle = tokenize(name);
        let mut start = 0;
        while let Some(pos) = contains_seq(&tokens[start..], &needle) {
            let at = start + pos;
            if at > 0 {
                if let Ok(n) = tokens[at - 1].parse::<u64>() {
                    if n > *have {
                        return true;
                    }
                }
            }
            start = at + 1;
        }
    }
    false
}

pub fn text_violation(steps: &[String], inst: &PlanningInstance) -> Result<bool, ViolationError> {
    if steps.iter().all(|s| tokenize(s).is_empty()) {
        return Err(ViolationError::UnparseablePlan);
    }
    Ok(steps.iter().any(|s| step_violates(s, inst)))
}

/// Grades a free-text plan, turning an unparseable plan into a flagged
/// violation.
pub fn grade_text(steps: &[String], inst: &PlanningInstance) -> ViolationVerdict {
    match text_violation(steps, inst) {
        Ok(v) => ViolationVerdict { violation: v, flagged: false },
        Err(ViolationError::UnparseablePlan) => ViolationVerdict { violation: true, flagged: true },
    }
}

pub fn plan_steps(text: &str) -> Vec<String> {
    text.lines().map(|l| String::from(l.trim())).filter(|l| !l.is_empty()).collect()
}
