//! Hypotheses from an external text-generation service, with a
//! record/replay cassette so runs can be reproduced offline.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use querybridge_core::hypothesis::Hypothesis;
use querybridge_core::proposer::{instantiate, ProposalKind, ProposalRequest, Proposer, ProposerError, RuleKind};

/// Environment variable holding the bearer token sent to the service.
pub const TOKEN_ENV: &str = "QUERYBRIDGE_PROPOSER_TOKEN";
pub const REQUEST_SCHEMA: &str = "querybridge.propose/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CassetteMode {
    Off,
    Record(PathBuf),
    Replay(PathBuf),
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
    #[error("cassette {}: {err}", path.display())]
    Cassette { path: PathBuf, err: std::io::Error },
    #[error("cassette {}: line {line}: {err}", path.display())]
    CassetteLine { path: PathBuf, line: usize, err: serde_json::Error },
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub request: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RemoteStats {
    pub requests: u64,
    /// Entries dropped by validation.
    pub warnings: u64,
    /// Timeouts, transport errors and responses with nothing usable.
    pub failures: u64,
}

enum Transport {
    Live { client: reqwest::blocking::Client, record: Option<PathBuf> },
    Replay(BTreeMap<String, CassetteEntry>),
}

pub struct RemoteProposer {
    cfg: ServiceConfig,
    transport: Transport,
    token: Option<String>,
    stats: RemoteStats,
}

fn kind_parts(kind: &ProposalKind) -> (&'static str, Option<&str>) {
    match kind {
        ProposalKind::Forward => ("forward", None),
        ProposalKind::Backward => ("backward", None),
        ProposalKind::Bridge(p) => ("bridge", Some(p.as_str())),
    }
}

/// Plain-language instruction sent alongside the structured fields.
pub fn prompt(req: &ProposalRequest) -> String {
    let (kind, target) = kind_parts(&req.kind);
    let task = match target {
        Some(p) => format!("Propose actions that make the precondition `{p}` true."),
        None if kind == "backward" => "Propose actions that could be the last step before reaching the requirement state.".into(),
        None => "Propose next actions from the current state toward the goal.".into(),
    };
    format!(
        "{task} Return at most {} hypotheses as JSON {{\"hypotheses\": [...]}}. Each hypothesis has id, action, \
         pre (list of {{p, label}} with label sat, viol or unk), eff (resources, structure, predicates, \
         time) and score in [0, 1].",
        req.max_candidates()
    )
}

pub fn request_body(req: &ProposalRequest, model: &str) -> Value {
    let (kind, target) = kind_parts(&req.kind);
    json!({
        "schema": REQUEST_SCHEMA,
        "model": model,
        "kind": kind,
        "target": target,
        "max_candidates": req.max_candidates(),
        "state": req.at,
        "goal": req.goal,
        "hints": req.hints,
        "prompt": prompt(req),
    })
}

/// Hex SHA-256 of the request's JSON text.
pub fn request_key(body: &Value) -> String {
    let digest = Sha256::digest(body.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Validated hypotheses from a response body, plus the number of entries
/// dropped. `None` when the body is not a hypothesis list at all.
pub fn parse_response(body: &str, req: &ProposalRequest) -> Option<(Vec<Hypothesis>, u64)> {
    let v: Value = serde_json::from_str(body).ok()?;
    let items = match v {
        Value::Array(items) => items,
        Value::Object(mut o) => match o.remove("hypotheses") {
            Some(Value::Array(items)) => items,
            _ => return None,
        },
        _ => return None,
    };
    let (rule_kind, target) = match &req.kind {
        ProposalKind::Forward => (RuleKind::Forward, None),
        ProposalKind::Backward => (RuleKind::Backward, None),
        ProposalKind::Bridge(p) => (RuleKind::Bridge, Some(p)),
    };
    let mut out = Vec::new();
    let mut dropped = 0;
    for item in items {
        let Ok(mut h) = serde_json::from_value::<Hypothesis>(item) else {
            dropped += 1;
            continue;
        };
        if h.validate().is_err() || h.id.is_empty() {
            dropped += 1;
            continue;
        }
        if let Some(p) = target {
            if h.establishes.is_empty() {
                h.establishes.push(p.clone());
            } else if !h.establishes.contains(p) {
                dropped += 1;
                continue;
            }
        }
        out.push(instantiate(&h, &req.at, rule_kind));
    }
    out.truncate(req.max_candidates());
    Some((out, dropped))
}

fn load_cassette(path: &Path) -> Result<BTreeMap<String, CassetteEntry>, RemoteError> {
    let text = fs::read_to_string(path).map_err(|err| RemoteError::Cassette { path: path.into(), err })?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let e: CassetteEntry = serde_json::from_str(line)
            .map_err(|err| RemoteError::CassetteLine { path: path.into(), line: i + 1, err })?;
        out.insert(e.key.clone(), e);
    }
    Ok(out)
}

impl RemoteProposer {
    /// Reads the token from [`TOKEN_ENV`]; replay mode never touches the
    /// network.
    pub fn new(cfg: ServiceConfig, mode: CassetteMode) -> Result<Self, RemoteError> {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        let transport = match mode {
            CassetteMode::Replay(path) => Transport::Replay(load_cassette(&path)?),
            CassetteMode::Off | CassetteMode::Record(_) => {
                let client = reqwest::blocking::Client::builder().timeout(Duration::from_secs(cfg.timeout_secs)).build()?;
                let record = match mode {
                    CassetteMode::Record(p) => Some(p),
                    _ => None,
                };
                Transport::Live { client, record }
            }
        };
        Ok(Self { cfg, transport, token, stats: RemoteStats::default() })
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn stats(&self) -> RemoteStats {
        self.stats
    }

    fn exchange(&self, key: &str, body: &Value) -> Result<CassetteEntry, ProposerError> {
        match &self.transport {
            Transport::Replay(entries) => entries
                .get(key)
                .cloned()
                .ok_or_else(|| ProposerError::ProposerUnavailable(format!("no cassette entry for request {key}"))),
            Transport::Live { client, record } => {
                let mut rb = client.post(&self.cfg.url).json(body);
                if let Some(t) = &self.token {
                    rb = rb.bearer_auth(t);
                }
                let mut entry = CassetteEntry { key: key.into(), request: body.clone(), status: None, body: String::new(), error: None };
                match rb.send().and_then(|r| {
                    let status = r.status().as_u16();
                    r.text().map(|t| (status, t))
                }) {
                    Ok((status, text)) => {
                        entry.status = Some(status);
                        entry.body = text;
                    }
                    Err(e) if e.is_timeout() => entry.error = Some("timeout".into()),
                    Err(e) => entry.error = Some(e.to_string()),
                }
                if let Some(path) = record {
                    append(path, &entry).map_err(|e| ProposerError::ProposerUnavailable(format!("{}: {e}", path.display())))?;
                }
                Ok(entry)
            }
        }
    }
}

fn append(path: &Path, entry: &CassetteEntry) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(entry).map_err(std::io::Error::other)?)
}

impl Proposer for RemoteProposer {
    /// Service errors and unusable responses yield an empty proposal.
    fn propose(&mut self, req: &ProposalRequest) -> Result<Vec<Hypothesis>, ProposerError> {
        let body = request_body(req, &self.cfg.model);
        let key = request_key(&body);
        self.stats.requests += 1;
        let entry = self.exchange(&key, &body)?;
        if entry.error.is_some() || !entry.status.is_some_and(|s| (200..300).contains(&s)) {
            self.stats.failures += 1;
            return Ok(Vec::new());
        }
        match parse_response(&entry.body, req) {
            Some((hs, dropped)) => {
                self.stats.warnings += dropped;
                if hs.is_empty() && dropped > 0 {
                    self.stats.failures += 1;
                }
                Ok(hs)
            }
            None => {
                self.stats.failures += 1;
                Ok(Vec::new())
            }
        }
    }
}
