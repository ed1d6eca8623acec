//! World states, typed effects and their application.
//!
//! A [`WorldState`] has four layers: integer resource counts, a symbolic
//! structure map, boolean predicates and a time budget. Effects are applied as
//! pure functions: resources add a signed delta, structure and predicate keys
//! are overwritten, and completion time accumulates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Resources = BTreeMap<String, u64>;
pub type Structure = BTreeMap<String, String>;
pub type Predicates = BTreeMap<String, bool>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("effect drives resource `{name}` negative ({value})")]
    NegativeResource { name: String, value: i128 },
    #[error("empty key in {layer} layer")]
    EmptyKey { layer: &'static str },
    #[error("malformed structure text near `{0}`")]
    MalformedStructure(String),
}

/// Elapsed seconds and the seconds budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeState {
    pub completion: u64,
    pub deadline: u64,
}

impl TimeState {
    pub fn new(completion: u64, deadline: u64) -> Self {
        Self { completion, deadline }
    }

    pub fn within_deadline(&self) -> bool {
        self.completion <= self.deadline
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldState {
    #[serde(default)]
    pub resources: Resources,
    #[serde(default)]
    pub structure: Structure,
    #[serde(default)]
    pub predicates: Predicates,
    #[serde(default)]
    pub time: TimeState,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_resource(mut self, name: &str, count: u64) -> Self {
        self.resources.insert(name.into(), count);
        self
    }

    pub fn with_structure(mut self, key: &str, value: &str) -> Self {
        self.structure.insert(key.into(), value.into());
        self
    }

    pub fn with_predicate(mut self, name: &str, value: bool) -> Self {
        self.predicates.insert(name.into(), value);
        self
    }

    pub fn with_time(mut self, completion: u64, deadline: u64) -> Self {
        self.time = TimeState::new(completion, deadline);
        self
    }

    /// Count of a resource, absent keys read as zero.
    pub fn resource(&self, name: &str) -> u64 {
        self.resources.get(name).copied().unwrap_or(0)
    }

    /// Truth of a predicate, absent keys read as false.
    pub fn predicate(&self, name: &str) -> bool {
        self.predicates.get(name).copied().unwrap_or(false)
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if self.structure.keys().any(|k| k.is_empty()) {
            return Err(StateError::EmptyKey { layer: "structure" });
        }
        if self.predicates.keys().any(|k| k.is_empty()) {
            return Err(StateError::EmptyKey { layer: "predicates" });
        }
        if self.resources.keys().any(|k| k.is_empty()) {
            return Err(StateError::EmptyKey { layer: "resources" });
        }
        Ok(())
    }

    /// Canonical single-line text of the whole state, used for hashing.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        out.push_str("r{");
        for (k, v) in &self.resources {
            let _ = write!(out, "{}={};", escape(k), v);
        }
        out.push_str("}s{");
        for (k, v) in &self.structure {
            let _ = write!(out, "{}={};", escape(k), escape(v));
        }
        out.push_str("}l{");
        for (k, v) in &self.predicates {
            let _ = write!(out, "{}={};", escape(k), u8::from(*v));
        }
        let _ = write!(out, "}}t{{{},{}}}", self.time.completion, self.time.deadline);
        out
    }

    /// Stable 64-bit identifier derived from [`WorldState::canonical_text`].
    pub fn state_id(&self) -> u64 {
        crate::digest64(self.canonical_text().as_bytes())
    }
}

fn escape(s: &str) -> String {
    if s.contains(['=', ';', '{', '}', '\\']) {
        let mut out = String::with_capacity(s.len() + 4);
        for c in s.chars() {
            if matches!(c, '=' | ';' | '{' | '}' | '\\') {
                out.push('\\');
            }
            out.push(c);
        }
        out
    } else {
        s.into()
    }
}

/// Typed effects of a hypothesis: Δr, Δs, Δℓ and Δt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Effects {
    #[serde(rename = "resources", default)]
    pub delta_resources: BTreeMap<String, i64>,
    #[serde(rename = "structure", default)]
    pub set_structure: Structure,
    #[serde(rename = "predicates", default)]
    pub set_predicates: Predicates,
    #[serde(rename = "time", default)]
    pub delta_time: u64,
}

impl Effects {
    pub fn is_empty(&self) -> bool {
        self.delta_resources.is_empty()
            && self.set_structure.is_empty()
            && self.set_predicates.is_empty()
            && self.delta_time == 0
    }

    pub fn resource(mut self, name: &str, delta: i64) -> Self {
        self.delta_resources.insert(name.into(), delta);
        self
    }

    pub fn structure(mut self, key: &str, value: &str) -> Self {
        self.set_structure.insert(key.into(), value.into());
        self
    }

    pub fn predicate(mut self, name: &str, value: bool) -> Self {
        self.set_predicates.insert(name.into(), value);
        self
    }

    pub fn time(mut self, seconds: u64) -> Self {
        self.delta_time = seconds;
        self
    }

    /// `self` followed by `next`: deltas sum, overwrites from `next` win.
    pub fn then(&self, next: &Effects) -> Effects {
        let mut out = self.clone();
        for (k, d) in &next.delta_resources {
            *out.delta_resources.entry(k.clone()).or_insert(0) += d;
        }
        for (k, v) in &next.set_structure {
            out.set_structure.insert(k.clone(), v.clone());
        }
        for (k, v) in &next.set_predicates {
            out.set_predicates.insert(k.clone(), *v);
        }
        out.delta_time += next.delta_time;
        out
    }

    pub fn canonical_text(&self) -> String {
        let mut out = String::from("dr{");
        for (k, v) in &self.delta_resources {
            let _ = write!(out, "{}={};", escape(k), v);
        }
        out.push_str("}ds{");
        for (k, v) in &self.set_structure {
            let _ = write!(out, "{}={};", escape(k), escape(v));
        }
        out.push_str("}dl{");
        for (k, v) in &self.set_predicates {
            let _ = write!(out, "{}={};", escape(k), u8::from(*v));
        }
        let _ = write!(out, "}}dt{{{}}}", self.delta_time);
        out
    }
}

/// Applies `eff` to `state`, returning the successor. The input is untouched.
pub fn apply_effects(state: &WorldState, eff: &Effects) -> Result<WorldState, StateError> {
    let mut next = state.clone();
    for (name, delta) in &eff.delta_resources {
        let value = i128::from(state.resource(name)) + i128::from(*delta);
        if value < 0 {
            return Err(StateError::NegativeResource { name: name.clone(), value });
        }
        next.resources.insert(name.clone(), value as u64);
    }
    for (k, v) in &eff.set_structure {
        next.structure.insert(k.clone(), v.clone());
    }
    for (k, v) in &eff.set_predicates {
        next.predicates.insert(k.clone(), *v);
    }
    next.time.completion = state.time.completion.saturating_add(eff.delta_time);
    Ok(next)
}

/// `key=value` pairs sorted by key, joined by single spaces.
pub fn serialize_structure(s: &Structure) -> String {
    let parts: Vec<String> = s.iter().map(|(k, v)| format!("{k}={v}")).collect();
    parts.join(" ")
}

/// Inverse of [`serialize_structure`] for keys without `=`/whitespace and
/// values without whitespace.
pub fn parse_structure(text: &str) -> Result<Structure, StateError> {
    let mut out = Structure::new();
    for pair in text.split_whitespace() {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| StateError::MalformedStructure(pair.into()))?;
        if k.is_empty() {
            return Err(StateError::MalformedStructure(pair.into()));
        }
        out.insert(k.into(), v.into());
    }
    Ok(out)
}
