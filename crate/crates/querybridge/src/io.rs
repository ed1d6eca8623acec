//! Instance, domain and config files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use querybridge_core::config::SearchConfig;
use querybridge_core::instance::PlanningInstance;
use querybridge_core::proposer::ScriptedDomain;
use querybridge_core::trace::{TraceEvent, TraceSink};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{}: {err}", path.display())]
    Json { path: PathBuf, err: serde_json::Error },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

impl LoadError {
    fn invalid(path: &Path, message: impl ToString) -> Self {
        LoadError::Invalid { path: path.into(), message: message.to_string() }
    }
}

/// An instance with its scripted domain and, for directory-style
/// instances, a sibling `config.json`.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub path: PathBuf,
    pub instance: PlanningInstance,
    pub domain: Option<ScriptedDomain>,
    pub config: Option<SearchConfig>,
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|err| LoadError::Io { path: path.into(), err })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, LoadError> {
    serde_json::from_str(text).map_err(|err| LoadError::Json { path: path.into(), err })
}

pub fn load_config(path: &Path) -> Result<SearchConfig, LoadError> {
    let cfg: SearchConfig = parse(path, &read(path)?)?;
    cfg.validate().map_err(|e| LoadError::invalid(path, e))?;
    Ok(cfg)
}

pub fn load_domain(path: &Path) -> Result<ScriptedDomain, LoadError> {
    let d: ScriptedDomain = parse(path, &read(path)?)?;
    d.validate().map_err(|e| LoadError::invalid(path, e))?;
    Ok(d)
}

/// Splits an instance document into the instance proper and its domain.
/// `domain` may be an inline rule list or, when `base` is given, a path
/// relative to it.
pub fn split_instance(
    path: &Path,
    mut doc: Value,
    base: Option<&Path>,
) -> Result<(PlanningInstance, Option<ScriptedDomain>), LoadError> {
    let domain = match doc.as_object_mut().and_then(|o| o.remove("domain")) {
        None | Some(Value::Null) => None,
        Some(Value::String(rel)) => match base {
            Some(base) => Some(load_domain(&base.join(rel))?),
            None => return Err(LoadError::invalid(path, "domain must be inline here")),
        },
        Some(v @ Value::Array(_)) => {
            let d: ScriptedDomain =
                serde_json::from_value(v).map_err(|err| LoadError::Json { path: path.into(), err })?;
            d.validate().map_err(|e| LoadError::invalid(path, e))?;
            Some(d)
        }
        Some(_) => return Err(LoadError::invalid(path, "domain must be a path or a rule list")),
    };
    let inst: PlanningInstance =
        serde_json::from_value(doc).map_err(|err| LoadError::Json { path: path.into(), err })?;
    inst.validate().map_err(|e| LoadError::invalid(path, e))?;
    Ok((inst, domain))
}

/// Loads an instance file, or a directory holding `instance.json`.
pub fn load_instance(path: &Path) -> Result<LoadedInstance, LoadError> {
    let (file, dir_style) = if path.is_dir() { (path.join("instance.json"), true) } else { (path.to_path_buf(), false) };
    let doc: Value = parse(&file, &read(&file)?)?;
    let base = file.parent().unwrap_or(Path::new("."));
    let (instance, domain) = split_instance(&file, doc, Some(base))?;
    let cfg_path = base.join("config.json");
    let config = if (dir_style || file.file_name().is_some_and(|n| n == "instance.json")) && cfg_path.is_file() {
        Some(load_config(&cfg_path)?)
    } else {
        None
    };
    Ok(LoadedInstance { path: file, instance, domain, config })
}

/// Instances found directly under `dir`: `*.json` files and subdirectories
/// with an `instance.json`, in name order. Entries that fail to load are
/// returned as `(name, reason)` pairs.
pub fn scan_dir(dir: &Path) -> Result<(Vec<LoadedInstance>, Vec<String>), LoadError> {
    let entries = fs::read_dir(dir).map_err(|err| LoadError::Io { path: dir.into(), err })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    let mut loaded = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        let candidate = if p.is_dir() {
            p.join("instance.json").is_file()
        } else {
            p.extension().is_some_and(|e| e == "json")
        };
        if !candidate {
            continue;
        }
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match load_instance(&p) {
            Ok(li) => loaded.push(li),
            Err(e) => skipped.push(format!("{name}: {}", reason(&e))),
        }
    }
    Ok((loaded, skipped))
}

/// Error text without the absolute path, so reports do not depend on
/// where the corpus lives.
fn reason(e: &LoadError) -> String {
    match e {
        LoadError::Io { err, .. } => err.to_string(),
        LoadError::Json { err, .. } => err.to_string(),
        LoadError::Invalid { message, .. } => message.clone(),
    }
}

/// Streams trace events as JSON lines. The first write error is kept and
/// later events are dropped.
pub struct JsonlSink<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl JsonlSink<BufWriter<fs::File>> {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok(Self::new(BufWriter::new(fs::File::create(path)?)))
    }
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for JsonlSink<W> {
    fn emit(&mut self, event: TraceEvent) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(&event).expect("trace events serialise");
        if let Err(e) = writeln!(self.out, "{line}") {
            self.error = Some(e);
        }
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, LoadError> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse(path, l))
        .collect()
}
