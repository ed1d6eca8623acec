//! Ordered events emitted by a search session.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hypothesis::Hypothesis;
use crate::oracle::{OracleAnswer, Query};
use crate::verifier::{Certificate, Rejection, ScreenVerdicts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineAction {
    Bridge,
    Query,
    Discard,
}

/// Why a candidate never became an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    BelowFloor,
    TooManyUnknowns,
    Violated,
    Refinement,
    Infeasible,
    Duplicate,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum TraceEvent {
    Expansion {
        index: u64,
        direction: Direction,
        node: usize,
        hypothesis: String,
        score: f64,
    },
    Proposal {
        direction: Direction,
        node: usize,
        request: String,
        hypotheses: Vec<String>,
    },
    RefineStep {
        unknown: String,
        action_taken: RefineAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bridge: Option<String>,
        signature_hit: bool,
        outcome: String,
    },
    QueryIssued {
        query: Query,
    },
    AnswerReceived {
        proposition: String,
        answer: OracleAnswer,
    },
    Insert {
        direction: Direction,
        node: usize,
        parent: usize,
        hypothesis: Hypothesis,
    },
    Prune {
        direction: Direction,
        hypothesis: String,
        reason: PruneReason,
        score: f64,
    },
    Meet {
        forward: usize,
        backward: usize,
        screen: ScreenVerdicts,
        deferred: bool,
    },
    VerifierCall {
        forward: usize,
        backward: usize,
        accepted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        certificate: Option<Certificate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rejection: Option<Rejection>,
    },
    Outcome {
        status: String,
        expansions: u64,
        queries_issued: u64,
        hypotheses_generated: u64,
        verifier_calls: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<Vec<String>>,
    },
}

impl TraceEvent {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TraceEvent::Expansion { .. } => "Expansion",
            TraceEvent::Proposal { .. } => "Proposal",
            TraceEvent::RefineStep { .. } => "RefineStep",
            TraceEvent::QueryIssued { .. } => "QueryIssued",
            TraceEvent::AnswerReceived { .. } => "AnswerReceived",
            TraceEvent::Insert { .. } => "Insert",
            TraceEvent::Prune { .. } => "Prune",
            TraceEvent::Meet { .. } => "Meet",
            TraceEvent::VerifierCall { .. } => "VerifierCall",
            TraceEvent::Outcome { .. } => "Outcome",
        }
    }
}

pub trait TraceSink {
    fn emit(&mut self, event: TraceEvent);
}

impl TraceSink for Vec<TraceEvent> {
    fn emit(&mut self, event: TraceEvent) {
        self.push(event);
    }
}

/// Discards every event.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn emit(&mut self, _event: TraceEvent) {}
}
