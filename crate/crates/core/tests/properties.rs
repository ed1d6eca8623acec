mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use querybridge_core::bench::metrics::{bleu, rouge_n};
use querybridge_core::bench::reveal::{apply_reveal, k_reveal};
use querybridge_core::bench::violation::chain_violates;
use querybridge_core::distance::{goal_distance, DistanceWeights, HashedBagEmbedding};
use querybridge_core::goal::GoalSpec;
use querybridge_core::hypothesis::{compose, score_from_distance, Hypothesis, Label, Precondition, ScoreParams};
use querybridge_core::proposer::{ProposalKind, ProposalRequest};
use querybridge_core::state::{apply_effects, Effects, WorldState};
use querybridge_core::verifier::{hard_check, pullback_verify, PlanChain};
use support::random::{meets_target, random_world, step_state, RESOURCES};

const NAMES: [&str; 4] = ["ore", "plank", "gear", "rope"];

fn state() -> impl Strategy<Value = WorldState> {
    (
        prop::collection::btree_map(prop::sample::select(NAMES.to_vec()), 0u64..5, 0..4),
        prop::collection::btree_map(prop::sample::select(vec!["lit", "wet", "open"]), any::<bool>(), 0..3),
        prop::collection::btree_map(prop::sample::select(vec!["mode", "shape"]), prop::sample::select(vec!["a", "b"]), 0..2),
        0u64..200,
        0u64..300,
    )
        .prop_map(|(r, p, s, completion, deadline)| {
            let mut w = WorldState::new().with_time(completion, deadline);
            for (k, v) in r {
                w = w.with_resource(k, v);
            }
            for (k, v) in p {
                w = w.with_predicate(k, v);
            }
            for (k, v) in s {
                w = w.with_structure(k, v);
            }
            w
        })
}

fn effects() -> impl Strategy<Value = Effects> {
    (
        prop::collection::btree_map(prop::sample::select(NAMES.to_vec()), -3i64..4, 0..3),
        prop::collection::btree_map(prop::sample::select(vec!["lit", "wet"]), any::<bool>(), 0..2),
        0u64..100,
    )
        .prop_map(|(r, p, t)| {
            let mut e = Effects::default().time(t);
            for (k, d) in r {
                e = e.resource(k, d);
            }
            for (k, v) in p {
                e = e.predicate(k, v);
            }
            e
        })
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["cut", "the", "legs", "into", "wheels", "sand", "a", "body", "."]), 0..12)
        .prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn distance_is_non_negative_and_zero_at_target(w in state(), g in state()) {
        let embed = HashedBagEmbedding::default();
        let goal = GoalSpec::new(g.clone());
        let d = goal_distance(&w, &goal, &DistanceWeights::default(), &embed).unwrap();
        prop_assert!(d >= 0.0 && d.is_finite());
        let mut at_target = g.clone();
        at_target.time.completion = g.time.deadline;
        let zero = goal_distance(&at_target, &goal, &DistanceWeights::default(), &embed).unwrap();
        prop_assert!(zero.abs() < 1e-9, "{zero}");
        let s = score_from_distance(d, 3.0);
        prop_assert!(s > 0.0 && s <= 1.0);
    }

    #[test]
    fn hard_check_matches_target_reading(w in state(), g in state()) {
        let goal = GoalSpec::new(g.clone());
        prop_assert_eq!(hard_check(&w, &goal).pass, meets_target(&w, goal.target()));
    }

    #[test]
    fn pullback_implies_hard_check(w in state(), g in state()) {
        let goal = GoalSpec::new(g);
        if pullback_verify(&w, &goal).is_some() {
            prop_assert!(hard_check(&w, &goal).pass);
        }
    }

    #[test]
    fn pullback_on_the_diagonal(w in state()) {
        let mut target = w.clone();
        target.time.deadline = target.time.deadline.max(w.time.completion);
        let goal = GoalSpec::new(target);
        let witness = pullback_verify(&w, &goal);
        prop_assert!(witness.is_some());
        let witness = witness.unwrap();
        for (k, n) in &goal.target().resources {
            prop_assert_eq!(witness.meet_state.resource(k), *n);
        }
        prop_assert!(hard_check(&witness.meet_state, &goal).pass);
    }

    #[test]
    fn apply_matches_independent_step(w in state(), e in effects()) {
        let ours = apply_effects(&w, &e).ok();
        let theirs = step_state(&w, &e);
        prop_assert_eq!(ours, theirs);
    }

    #[test]
    fn metrics_stay_in_unit_interval(c in words(), r in words()) {
        if let Ok(x) = rouge_n(&c, &r, 1) { prop_assert!((0.0..=1.0).contains(&x)); }
        if let Ok(x) = rouge_n(&c, &r, 2) { prop_assert!((0.0..=1.0).contains(&x)); }
        if let Ok(x) = bleu(&c, &r) { prop_assert!((0.0..=1.0).contains(&x)); }
    }

    #[test]
    fn composition_never_exceeds_either_score(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let bridge = Hypothesis::new("b", "bridge", vec![], Effects::default().time(1)).with_score(a).establishing(&["p"]);
        let main = Hypothesis::new("m", "main", vec![Precondition::new("p", Label::Unk)], Effects::default()).with_score(b);
        let c = compose(&bridge, &main, &ScoreParams::default()).unwrap();
        prop_assert!(c.score <= a.min(b) + 1e-15);
        prop_assert!((c.score - a.min(b) * 0.95).abs() < 1e-12);
        prop_assert!(c.unknowns().is_empty());
    }

    #[test]
    fn reveal_partitions_latent_set(seed in any::<u64>(), k in 0usize..=6) {
        let fx = support::load(&support::fixtures().join("toy_car"));
        let v = k_reveal(&fx.instance, k, seed).unwrap();
        prop_assert_eq!(v.revealed.len(), k);
        prop_assert_eq!(v.revealed.len() + v.hidden.len(), fx.instance.latent_count());
        let mut all: Vec<String> = v.revealed.iter().chain(&v.hidden).cloned().collect();
        all.sort();
        let mut want: Vec<String> = fx.instance.latent_preconditions.entries.iter().map(|e| e.p.clone()).collect();
        want.sort();
        prop_assert_eq!(all, want);
        prop_assert_eq!(&v, &k_reveal(&fx.instance, k, seed).unwrap());
        let inst = apply_reveal(&fx.instance, &v);
        prop_assert!(inst.validate().is_ok());
    }
}

#[test]
fn reveal_subsets_are_uniform() {
    let fx = support::family().into_iter().next().unwrap();
    assert_eq!(fx.instance.latent_count(), 5);
    let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    let n = 10_000u64;
    for seed in 0..n {
        *counts.entry(k_reveal(&fx.instance, 2, seed).unwrap().revealed).or_default() += 1;
    }
    assert_eq!(counts.len(), 10);
    let expected = n as f64 / 10.0;
    let sigma = (n as f64 * 0.1 * 0.9).sqrt();
    let mut chi2 = 0.0;
    for c in counts.values() {
        let c = *c as f64;
        assert!((c - expected).abs() <= 3.0 * sigma, "{c} vs {expected}");
        chi2 += (c - expected).powi(2) / expected;
    }
    // chi-square 0.999 quantile with 9 degrees of freedom
    assert!(chi2 < 27.877, "chi2 {chi2}");
}

/// Consuming a resource the inventory never held, or more than it holds.
fn replay_violates(chain: &PlanChain, start: &WorldState) -> bool {
    let mut w = start.clone();
    for s in &chain.steps {
        if s.hypothesis.eff.delta_resources.iter().any(|(k, d)| *d < 0 && !w.resources.contains_key(k)) {
            return true;
        }
        match step_state(&w, &s.hypothesis.eff) {
            Some(next) => w = next,
            None => return true,
        }
    }
    false
}

#[test]
fn violation_agrees_with_replay() {
    let mut violating = 0;
    for case in 0..300u64 {
        let world = random_world(case);
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        // plans are built against an inventory that may differ from the truth
        let mut believed = world.instance.start_state();
        for r in RESOURCES {
            if rng.random_bool(0.3) {
                believed.resources.insert(r.into(), rng.random_range(0..=4));
            }
        }
        let mut chain = PlanChain::new(believed);
        for _ in 0..rng.random_range(1..=4) {
            let req = ProposalRequest::new(chain.terminal().clone(), world.instance.goal.clone(), ProposalKind::Forward, 3).unwrap();
            let Some(h) = world.domain.propose(&req).choose(&mut rng).cloned() else { break };
            if chain.push(h).is_err() {
                break;
            }
        }
        let expected = replay_violates(&chain, &world.instance.start_state());
        violating += usize::from(expected);
        assert_eq!(chain_violates(&chain, &world.instance), expected, "case {case}");
    }
    assert!(violating > 10, "{violating}");
}
