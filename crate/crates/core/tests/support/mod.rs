#![allow(dead_code)]

//! Fixture loading, random domains and the checks shared with the
//! acceptance harness.

use std::path::{Path, PathBuf};

use querybridge_core::bench::reveal::RevealVariant;
use querybridge_core::bench::sweep::PlannerRun;
use querybridge_core::config::SearchConfig;
use querybridge_core::distance::HashedBagEmbedding;
use querybridge_core::instance::PlanningInstance;
use querybridge_core::oracle::ScriptedOracle;
use querybridge_core::proposer::ScriptedDomain;
use querybridge_core::search::{run_search, SearchResult};
use querybridge_core::trace::TraceEvent;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub struct Fixture {
    pub instance: PlanningInstance,
    pub domain: ScriptedDomain,
    pub config: SearchConfig,
}

pub fn load(dir: &Path) -> Fixture {
    let instance: PlanningInstance = serde_json::from_str(&read(&dir.join("instance.json"))).unwrap();
    instance.validate().unwrap();
    let domain: ScriptedDomain = serde_json::from_str(&read(&dir.join("domain.json"))).unwrap();
    domain.validate().unwrap();
    let cfg_path = dir.join("config.json");
    let config = if cfg_path.exists() {
        serde_json::from_str(&read(&cfg_path)).unwrap()
    } else {
        SearchConfig::default()
    };
    Fixture { instance, domain, config }
}

/// Toy car followed by the synthetic family, in name order.
pub fn all() -> Vec<Fixture> {
    let mut out = vec![load(&fixtures().join("toy_car"))];
    out.extend(family());
    out
}

pub fn family() -> Vec<Fixture> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(fixtures().join("family"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load(d)).collect()
}

pub fn solve(inst: &PlanningInstance, domain: &ScriptedDomain, cfg: &SearchConfig) -> (SearchResult, Vec<TraceEvent>, u64) {
    let mut domain = domain.clone();
    let mut oracle = ScriptedOracle::new(inst.latent_preconditions.clone());
    let mut sink = Vec::new();
    let r = run_search(inst, cfg, &mut oracle, &mut domain, &HashedBagEmbedding::default(), &mut sink).unwrap();
    (r, sink, oracle.calls())
}

pub fn planner<'a>(
    fx: &'a Fixture,
    cfg: &'a SearchConfig,
) -> impl FnMut(&PlanningInstance, &RevealVariant) -> Result<PlannerRun, String> + 'a {
    move |inst, _| {
        let (result, _, calls) = solve(inst, &fx.domain, cfg);
        Ok(PlannerRun { result, oracle_calls: Some(calls) })
    }
}

pub mod random;
pub mod criteria;
