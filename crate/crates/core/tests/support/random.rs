//! Small random forward domains and an exhaustive chain enumerator that
//! shares nothing with the engine beyond the rule file format.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use querybridge_core::config::SearchConfig;
use querybridge_core::goal::GoalSpec;
use querybridge_core::hypothesis::{Hypothesis, Label, Precondition};
use querybridge_core::instance::PlanningInstance;
use querybridge_core::oracle::{GroundTruth, LatentPrecondition, Verdict};
use querybridge_core::proposer::{ProposalKind, ProposalRequest, Rule, RuleKind, ScriptedDomain, StatePattern};
use querybridge_core::state::{Effects, WorldState};

pub const RESOURCES: [&str; 3] = ["ore", "plank", "gear"];
pub const PREDICATES: [&str; 3] = ["lit", "wet", "open"];
pub const LATENT: [&str; 4] = ["latent alpha", "latent beta", "latent gamma", "latent delta"];
pub const MODES: [&str; 3] = ["a", "b", "c"];
pub const FUEL: u64 = 4;

pub struct RandomWorld {
    pub instance: PlanningInstance,
    pub domain: ScriptedDomain,
    pub config: SearchConfig,
}

fn random_effects(rng: &mut ChaCha8Rng) -> Effects {
    let mut eff = Effects::default().resource("fuel", -1).time(rng.random_range(10..=60));
    for _ in 0..rng.random_range(1..=2) {
        let r = RESOURCES.choose(rng).unwrap();
        eff = eff.resource(r, rng.random_range(-1..=2));
    }
    if rng.random_bool(0.4) {
        eff = eff.predicate(PREDICATES.choose(rng).unwrap(), rng.random_bool(0.7));
    }
    if rng.random_bool(0.4) {
        eff = eff.structure("mode", MODES.choose(rng).unwrap());
    }
    eff
}

fn random_pre(rng: &mut ChaCha8Rng) -> Vec<Precondition> {
    let mut pre = Vec::new();
    let mut latent: Vec<&str> = LATENT.to_vec();
    for i in 0..rng.random_range(0..=3) {
        let roll: f64 = rng.random();
        if roll < 0.6 {
            pre.push(Precondition::new(&format!("tool {i} ready"), Label::Sat));
        } else if roll < 0.9 && !latent.is_empty() {
            let j = rng.random_range(0..latent.len());
            pre.push(Precondition::new(latent.remove(j), Label::Unk));
        } else {
            pre.push(Precondition::new(&format!("path {i} blocked"), Label::Viol));
        }
    }
    pre
}

pub fn random_world(seed: u64) -> RandomWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=3usize);

    let mut initial = WorldState::new().with_resource("fuel", FUEL).with_structure("mode", "a");
    for r in RESOURCES {
        initial = initial.with_resource(r, rng.random_range(0..=2));
    }
    for p in PREDICATES {
        initial = initial.with_predicate(p, rng.random_bool(0.5));
    }

    let mut rules = Vec::new();
    for ri in 0..rng.random_range(2..=5) {
        let mut pattern = StatePattern::default();
        pattern.resources_at_least.insert("fuel".into(), 1);
        if rng.random_bool(0.5) {
            pattern.resources_at_least.insert((*RESOURCES.choose(&mut rng).unwrap()).into(), 1);
        }
        if rng.random_bool(0.3) {
            pattern.predicates.insert((*PREDICATES.choose(&mut rng).unwrap()).into(), rng.random_bool(0.5));
        }
        let templates = (0..rng.random_range(1..=3))
            .map(|ti| {
                let pre = random_pre(&mut rng);
                let eff = random_effects(&mut rng);
                Hypothesis::new(&format!("t{ri}_{ti}"), &format!("step {ri} {ti}"), pre, eff)
            })
            .collect();
        rules.push(Rule { pattern, kind: RuleKind::Forward, templates });
    }

    let deadline = rng.random_range(80..=250);
    let mut target = WorldState::new().with_time(0, deadline);
    for _ in 0..rng.random_range(1..=2) {
        target = target.with_resource(RESOURCES.choose(&mut rng).unwrap(), rng.random_range(1..=3));
    }
    if rng.random_bool(0.3) {
        target = target.with_predicate(PREDICATES.choose(&mut rng).unwrap(), true);
    }
    if rng.random_bool(0.3) {
        target = target.with_structure("mode", MODES.choose(&mut rng).unwrap());
    }

    let latent = LATENT
        .iter()
        .map(|p| {
            let roll: f64 = rng.random();
            let verdict = if roll < 0.5 {
                Verdict::Affirm
            } else if roll < 0.8 {
                Verdict::Refute
            } else {
                Verdict::Unknown
            };
            LatentPrecondition { p: (*p).into(), verdict, answer: String::new(), substitutions: vec![], question: None }
        })
        .collect();

    let mut instance = PlanningInstance::new(&format!("random_{seed}"), initial.with_time(0, deadline), GoalSpec::new(target));
    instance.latent_preconditions = GroundTruth::new(latent);
    let mut config = SearchConfig::default();
    config.k_branch = k;
    config.t_max = 100_000;
    RandomWorld { instance, domain: ScriptedDomain::new(rules).unwrap(), config }
}

/// Successor under `eff`, or `None` when an inventory count would go negative.
pub fn step_state(w: &WorldState, eff: &Effects) -> Option<WorldState> {
    let mut next = w.clone();
    for (name, delta) in &eff.delta_resources {
        let have = *w.resources.get(name).unwrap_or(&0) as i64;
        if have + delta < 0 {
            return None;
        }
        next.resources.insert(name.clone(), (have + delta) as u64);
    }
    next.structure.extend(eff.set_structure.iter().map(|(k, v)| (k.clone(), v.clone())));
    next.predicates.extend(eff.set_predicates.iter().map(|(k, v)| (k.clone(), *v)));
    next.time.completion += eff.delta_time;
    Some(next)
}

/// The goal read straight off its target state: counts as lower bounds,
/// true predicates, exact structure values and the deadline.
pub fn meets_target(w: &WorldState, target: &WorldState) -> bool {
    target.resources.iter().all(|(k, n)| w.resources.get(k).copied().unwrap_or(0) >= *n)
        && target.predicates.iter().filter(|(_, v)| **v).all(|(k, _)| w.predicates.get(k) == Some(&true))
        && target.structure.iter().all(|(k, v)| w.structure.get(k) == Some(v))
        && w.time.completion <= target.time.deadline
}

/// Whether a hypothesis survives label handling: no refuted precondition,
/// at most `u_max` unknowns, and every unknown affirmed by ground truth.
fn usable(h: &Hypothesis, truth: &BTreeMap<&str, Verdict>, u_max: usize) -> bool {
    let unknown: Vec<&Precondition> = h.pre.iter().filter(|p| p.label == Label::Unk).collect();
    !h.pre.iter().any(|p| p.label == Label::Viol)
        && unknown.len() <= u_max
        && unknown.iter().all(|p| truth.get(p.p.as_str()) == Some(&Verdict::Affirm))
}

/// Depth-first search over every chain the domain admits; true when some
/// reachable state satisfies the goal within the deadline.
pub fn enumerator_accepts(world: &RandomWorld) -> bool {
    let inst = &world.instance;
    let target = inst.goal.target();
    let truth: BTreeMap<&str, Verdict> =
        inst.latent_preconditions.entries.iter().map(|e| (e.p.as_str(), e.verdict)).collect();
    let mut seen = BTreeSet::new();
    let mut stack = vec![inst.start_state()];
    while let Some(w) = stack.pop() {
        if !seen.insert(w.clone()) {
            continue;
        }
        if meets_target(&w, target) {
            return true;
        }
        let req = ProposalRequest::new(w.clone(), inst.goal.clone(), ProposalKind::Forward, world.config.k_branch).unwrap();
        for h in world.domain.propose(&req) {
            if !usable(&h, &truth, world.config.u_max) {
                continue;
            }
            if let Some(next) = step_state(&w, &h.eff) {
                if next.time.completion <= target.time.deadline {
                    stack.push(next);
                }
            }
        }
    }
    false
}
