//! Oracles answering factual queries about latent preconditions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub proposition: String,
    pub question: String,
    pub instance_id: String,
    pub sequence_no: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Affirm,
    Refute,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub verdict: Verdict,
    pub answer_text: String,
    #[serde(default)]
    pub substitutions: Vec<String>,
}

impl OracleAnswer {
    /// Builds an answer, dropping substitutions on an Unknown verdict.
    pub fn new(verdict: Verdict, answer_text: &str, substitutions: Vec<String>) -> Self {
        let substitutions = if verdict == Verdict::Unknown { Vec::new() } else { substitutions };
        Self { verdict, answer_text: answer_text.into(), substitutions }
    }

    pub fn unknown() -> Self {
        Self::new(Verdict::Unknown, "", Vec::new())
    }
}

/// One annotated latent precondition of an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentPrecondition {
    pub p: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub answer: String,
    #[serde(default)]
    pub substitutions: Vec<String>,
    /// Natural-language form of the query, if the instance provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

/// Ground-truth annotations, in instance order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    pub entries: Vec<LatentPrecondition>,
}

impl GroundTruth {
    pub fn new(entries: Vec<LatentPrecondition>) -> Self {
        Self { entries }
    }

    pub fn get(&self, proposition: &str) -> Option<&LatentPrecondition> {
        self.entries.iter().find(|e| e.p == proposition)
    }

    /// Question text for `proposition`, falling back to a generic phrasing.
    pub fn question_for(&self, proposition: &str) -> String {
        self.get(proposition)
            .and_then(|e| e.question.clone())
            .unwrap_or_else(|| default_question(proposition))
    }
}

pub fn default_question(proposition: &str) -> String {
    format!("Is it true that {proposition}?")
}

/// Exact normalised match, then best token-set Jaccard at or above the
/// threshold (ties go to the earliest entry).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub jaccard_threshold: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { jaccard_threshold: 0.6 }
    }
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = tokenize(a).into_iter().collect();
    let sb: BTreeSet<String> = tokenize(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

impl MatchPolicy {
    pub fn find<'a>(&self, proposition: &str, gt: &'a GroundTruth) -> Option<&'a LatentPrecondition> {
        let key = normalize(proposition);
        if let Some(e) = gt.entries.iter().find(|e| normalize(&e.p) == key) {
            return Some(e);
        }
        let mut best: Option<(f64, &LatentPrecondition)> = None;
        for e in &gt.entries {
            let j = jaccard(proposition, &e.p);
            if j >= self.jaccard_threshold && best.is_none_or(|(b, _)| j > b) {
                best = Some((j, e));
            }
        }
        best.map(|(_, e)| e)
    }
}

/// Scripted answer from ground truth; no match yields Unknown.
pub fn answer(q: &Query, gt: &GroundTruth, matcher: &MatchPolicy) -> OracleAnswer {
    match matcher.find(&q.proposition, gt) {
        Some(e) => OracleAnswer::new(e.verdict, &e.answer, e.substitutions.clone()),
        None => OracleAnswer::unknown(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("interactive session closed")]
    SessionClosed,
    #[error("query timed out")]
    QueryTimeout,
}

pub trait Oracle {
    fn answer(&mut self, q: &Query) -> Result<OracleAnswer, OracleError>;
}

/// Ground-truth oracle used by benchmarks; counts its invocations.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    gt: GroundTruth,
    policy: MatchPolicy,
    calls: u64,
}

impl ScriptedOracle {
    pub fn new(gt: GroundTruth) -> Self {
        Self { gt, policy: MatchPolicy::default(), calls: 0 }
    }

    pub fn with_policy(mut self, policy: MatchPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl Oracle for ScriptedOracle {
    fn answer(&mut self, q: &Query) -> Result<OracleAnswer, OracleError> {
        self.calls += 1;
        Ok(answer(q, &self.gt, &self.policy))
    }
}

/// Replays a fixed list of answers in order; used to check that an
/// interactive transport yields the same trace as the scripted path.
#[derive(Debug, Clone, Default)]
pub struct ReplayOracle {
    answers: alloc::collections::VecDeque<OracleAnswer>,
}

impl ReplayOracle {
    pub fn new(answers: Vec<OracleAnswer>) -> Self {
        Self { answers: answers.into() }
    }
}

impl Oracle for ReplayOracle {
    fn answer(&mut self, _q: &Query) -> Result<OracleAnswer, OracleError> {
        self.answers.pop_front().ok_or(OracleError::SessionClosed)
    }
}
