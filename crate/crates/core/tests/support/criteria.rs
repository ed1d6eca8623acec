//! Checks behind the numbered acceptance criteria. Each returns a tally so
//! the integration tests can assert and the acceptance harness can report.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use querybridge_core::bench::reveal::{apply_reveal, k_reveal};
use querybridge_core::bench::sweep::{run_sweep, KSelection, RunReport};
use querybridge_core::config::SearchConfig;
use querybridge_core::distance::HashedBagEmbedding;
use querybridge_core::goal::GoalSpec;
use querybridge_core::hypothesis::{Hypothesis, Label, ScoreParams};
use querybridge_core::instance::PlanningInstance;
use querybridge_core::oracle::{GroundTruth, LatentPrecondition, ScriptedOracle, Verdict};
use querybridge_core::proposer::{ProposalKind, ProposalRequest, Proposer, ProposerError, ScriptedDomain};
use querybridge_core::refine::{refine, RefineContext, RefinementBudget};
use querybridge_core::search::{expansions_bound, SearchGraph, SearchResult};
use querybridge_core::state::{Effects, WorldState};
use querybridge_core::trace::{NullSink, TraceEvent};
use querybridge_core::verifier::{accept, Acceptance, PlanChain};

use super::random::{enumerator_accepts, meets_target, random_world, step_state, LATENT};
use super::{all, family, solve, Fixture};

#[derive(Debug, Default)]
pub struct Tally {
    pub cases: usize,
    pub failures: Vec<String>,
    pub note: String,
}

impl Tally {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, msg: String) {
        if self.failures.len() < 20 {
            self.failures.push(msg);
        } else if self.failures.len() == 20 {
            self.failures.push("...".into());
        }
    }
}

/// Proposer that ignores K and returns its whole pool, `repeat` times over,
/// for every bridge request.
struct Adversary {
    pool: Vec<Hypothesis>,
    repeat: usize,
    off_target: f64,
    rng: ChaCha8Rng,
}

impl Proposer for Adversary {
    fn propose(&mut self, req: &ProposalRequest) -> Result<Vec<Hypothesis>, ProposerError> {
        let ProposalKind::Bridge(p) = &req.kind else { return Ok(vec![]) };
        let mut out = Vec::new();
        for _ in 0..self.repeat {
            for b in &self.pool {
                let mut b = b.clone();
                b.establishes = if self.rng.random_bool(self.off_target) { vec!["something else".into()] } else { vec![p.clone()] };
                out.push(b);
            }
        }
        Ok(out)
    }
}

fn random_label(rng: &mut ChaCha8Rng) -> Label {
    match rng.random_range(0..10) {
        0..=4 => Label::Unk,
        5..=8 => Label::Sat,
        _ => Label::Viol,
    }
}

fn random_truth(rng: &mut ChaCha8Rng, props: &[String]) -> GroundTruth {
    let mut entries = Vec::new();
    for p in props {
        if !rng.random_bool(0.9) {
            continue;
        }
        entries.push(LatentPrecondition {
            p: p.clone(),
            verdict: *[Verdict::Affirm, Verdict::Affirm, Verdict::Refute, Verdict::Unknown].choose(rng).unwrap(),
            answer: String::new(),
            substitutions: vec![],
            question: None,
        });
    }
    GroundTruth::new(entries)
}

/// Refinement step bound: attempts + queries ≤ |U|·(t_bridge + 1).
pub fn refine_bound(cases: usize) -> Tally {
    let mut t = Tally::default();
    let props: Vec<String> = (0..6).map(|i| format!("fact {i} holds")).collect();
    let mut max_ratio: f64 = 0.0;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0_0000 + case as u64);
        let t_bridge = rng.random_range(0..=4u32);
        let n_pre = rng.random_range(0..=5);
        let mut chosen = props.clone();
        let pre: Vec<_> = (0..n_pre)
            .map(|_| {
                let p = chosen.remove(rng.random_range(0..chosen.len()));
                querybridge_core::hypothesis::Precondition::new(&p, random_label(&mut rng))
            })
            .collect();
        let h = Hypothesis::new("main", "main action", pre, Effects::default().time(5)).with_score(0.5);
        let pool: Vec<Hypothesis> = (0..rng.random_range(0..=4))
            .map(|i| {
                let bp = (0..rng.random_range(0..=3))
                    .map(|_| querybridge_core::hypothesis::Precondition::new(props.choose(&mut rng).unwrap(), random_label(&mut rng)))
                    .collect();
                let eff = if rng.random_bool(0.5) { Effects::default().time(3) } else { Effects::default().time(rng.random_range(1..50)) };
                Hypothesis::new(&format!("b{i}"), &format!("bridge {i}"), bp, eff).with_score(0.3)
            })
            .collect();
        let mut proposer = Adversary {
            pool,
            repeat: rng.random_range(1..=3),
            off_target: 0.1,
            rng: ChaCha8Rng::seed_from_u64(case as u64),
        };
        let mut oracle = ScriptedOracle::new(random_truth(&mut rng, &props));
        let at = WorldState::new().with_time(0, 1000);
        let goal = GoalSpec::new(WorldState::new().with_time(0, 1000));
        let questions = BTreeMap::new();
        let scorer = |b: &Hypothesis| Some(b.score);
        let (mut seq, mut hints, mut sink) = (0, Vec::new(), NullSink);
        let mut ctx = RefineContext {
            at: &at,
            goal: &goal,
            oracle: &mut oracle,
            proposer: &mut proposer,
            budget: RefinementBudget::new(t_bridge),
            max_depth: rng.random_range(1..=3),
            params: ScoreParams::default(),
            scorer: &scorer,
            check_feasibility: rng.random_bool(0.5),
            questions: &questions,
            instance_id: "fuzz",
            query_seq: &mut seq,
            hints: &mut hints,
            sink: &mut sink,
        };
        t.cases += 1;
        match refine(&h, &mut ctx) {
            Ok(out) => {
                let u = h.unknowns().len() as u64;
                let bound = u * (u64::from(t_bridge) + 1);
                let used = u64::from(out.bridge_attempts) + u64::from(out.queries_issued);
                if used > bound {
                    t.fail(format!("case {case}: {used} steps > bound {bound}"));
                }
                if bound > 0 {
                    max_ratio = max_ratio.max(used as f64 / bound as f64);
                }
            }
            Err(e) => t.fail(format!("case {case}: {e}")),
        }
    }
    t.note = format!("max steps/bound {max_ratio:.2}");
    t
}

/// Independent soundness check of an accepted chain.
pub fn independently_sound(chain: &PlanChain, goal: &GoalSpec) -> Result<(), String> {
    let target = goal.target();
    let mut w = chain.initial.clone();
    for (i, s) in chain.steps.iter().enumerate() {
        if let Some(p) = s.hypothesis.pre.iter().find(|p| p.label != Label::Sat) {
            return Err(format!("step {i}: `{}` not satisfied", p.p));
        }
        w = step_state(&w, &s.hypothesis.eff).ok_or_else(|| format!("step {i}: inventory would go negative"))?;
        if w.time.completion > target.time.deadline {
            return Err(format!("step {i}: completion {} past deadline", w.time.completion));
        }
    }
    if !meets_target(&w, target) {
        return Err("terminal state misses the goal".into());
    }
    Ok(())
}

fn goal_near(w: &WorldState, rng: &mut ChaCha8Rng) -> GoalSpec {
    let deadline = (w.time.completion as i64 + rng.random_range(-30..=60)).max(0) as u64;
    let mut target = WorldState::new().with_time(0, deadline);
    for (k, n) in &w.resources {
        if rng.random_bool(0.5) {
            let want = (*n as i64 + rng.random_range(-1..=1)).max(1) as u64;
            target = target.with_resource(k, want);
        }
    }
    for (k, v) in &w.predicates {
        if rng.random_bool(0.3) {
            target = target.with_predicate(k, *v || rng.random_bool(0.2));
        }
    }
    if rng.random_bool(0.3) {
        let mode = if rng.random_bool(0.8) { w.structure.get("mode").cloned().unwrap_or_default() } else { "z".into() };
        if !mode.is_empty() {
            target = target.with_structure("mode", &mode);
        }
    }
    GoalSpec::new(target)
}

/// Random chains from random domains; every accepted chain must pass the
/// independent check.
pub fn soundness(cases: usize) -> Tally {
    let mut t = Tally::default();
    let embed = HashedBagEmbedding::default();
    let mut accepted = 0;
    for case in 0..cases {
        let world = random_world(case as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5_0000 + case as u64);
        let mut chain = PlanChain::new(world.instance.start_state());
        for _ in 0..rng.random_range(0..=4) {
            let req = ProposalRequest::new(chain.terminal().clone(), world.instance.goal.clone(), ProposalKind::Forward, 3).unwrap();
            let candidates = world.domain.propose(&req);
            let Some(h) = candidates.choose(&mut rng) else { break };
            let mut h = h.clone();
            if rng.random_bool(0.7) {
                for p in h.pre.iter_mut().filter(|p| p.label == Label::Unk) {
                    p.label = Label::Sat;
                }
            }
            if chain.push(h).is_err() {
                break;
            }
        }
        let goal = if rng.random_bool(0.3) { world.instance.goal.clone() } else { goal_near(chain.terminal(), &mut rng) };
        t.cases += 1;
        match accept(&chain, &goal, &world.config, &embed) {
            Ok(Acceptance::Accepted(_)) => {
                accepted += 1;
                if let Err(e) = independently_sound(&chain, &goal) {
                    t.fail(format!("case {case}: accepted but {e}"));
                }
            }
            Ok(Acceptance::Rejected(_)) => {}
            Err(e) => t.fail(format!("case {case}: {e}")),
        }
    }
    // engine-produced chains go through the same check
    for seed in 0..200 {
        let world = random_world(10_000 + seed);
        let (r, _, _) = solve(&world.instance, &world.domain, &world.config);
        if let (Some(chain), true) = (r.outcome.chain(), r.outcome.is_success()) {
            accepted += 1;
            t.cases += 1;
            if let Err(e) = independently_sound(chain, &world.instance.goal) {
                t.fail(format!("search seed {seed}: {e}"));
            }
        }
    }
    if accepted < 100 {
        t.fail(format!("only {accepted} accepted chains exercised"));
    }
    t.note = format!("{accepted} accepted");
    t
}

/// Every revealed variant of every fixture that search solves.
fn fixture_cells(seeds: &[u64]) -> Vec<(String, PlanningInstance, ScriptedDomain, SearchConfig, Option<u32>)> {
    let mut out = Vec::new();
    for fx in all() {
        for k in 0..=fx.instance.latent_count() {
            for &seed in seeds {
                let v = k_reveal(&fx.instance, k, seed).unwrap();
                out.push((
                    format!("{} k={k} seed={seed}", fx.instance.id),
                    apply_reveal(&fx.instance, &v),
                    fx.domain.clone(),
                    fx.config.clone(),
                    fx.instance.solution_depth,
                ));
            }
        }
    }
    out
}

/// Expansions on every success stay within K^d·R^{u_max}.
pub fn expansion_bound(seeds: &[u64]) -> Tally {
    let mut t = Tally::default();
    let mut worst: f64 = 0.0;
    for (name, inst, domain, cfg, depth) in fixture_cells(seeds) {
        let (r, _, _) = solve(&inst, &domain, &cfg);
        if !r.outcome.is_success() {
            continue;
        }
        let Some(d) = depth else { continue };
        t.cases += 1;
        let bound = expansions_bound(&cfg, d);
        worst = worst.max(r.counters.expansions as f64 / bound as f64);
        if r.counters.expansions > bound {
            t.fail(format!("{name}: {} expansions > {bound}", r.counters.expansions));
        }
    }
    if t.cases == 0 {
        t.fail("no successes".into());
    }
    t.note = format!("max expansions/bound {worst:.4}");
    t
}

/// Search succeeds exactly when exhaustive enumeration finds an acceptable chain.
pub fn completeness(domains: u64) -> Tally {
    let mut t = Tally::default();
    let start = Instant::now();
    let mut solvable = 0;
    for seed in 0..domains {
        let world = random_world(seed);
        let (r, _, _) = solve(&world.instance, &world.domain, &world.config);
        let expected = enumerator_accepts(&world);
        solvable += usize::from(expected);
        t.cases += 1;
        if r.outcome.status() == "timeout" {
            t.fail(format!("seed {seed}: timeout"));
        } else if r.outcome.is_success() != expected {
            t.fail(format!("seed {seed}: search {} vs enumerator {expected}", r.outcome.status()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        t.fail(format!("took {secs:.1}s"));
    }
    if solvable == 0 || solvable == domains as usize {
        t.fail(format!("degenerate sample: {solvable} solvable"));
    }
    t.note = format!("{solvable}/{domains} solvable, {secs:.2}s");
    t
}

fn paths(g: &SearchGraph) -> BTreeMap<usize, Vec<String>> {
    let mut out = BTreeMap::from([(0, Vec::new())]);
    for e in &g.edges {
        let mut p = out[&e.from].clone();
        p.push(e.hypothesis.id.clone());
        out.insert(e.to, p);
    }
    out
}

type ChainKey = (Vec<String>, Vec<String>);

fn verdicts(r: &SearchResult, trace: &[TraceEvent]) -> BTreeMap<ChainKey, bool> {
    let (fp, bp) = (paths(&r.forward), paths(&r.backward));
    trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::VerifierCall { forward, backward, accepted, .. } => {
                Some(((fp[forward].clone(), bp[backward].clone()), *accepted))
            }
            _ => None,
        })
        .collect()
}

/// Screening on and off agree on outcome status and on every verdict both
/// runs computed.
pub fn screening_independence(seeds: &[u64], random_domains: u64) -> Tally {
    let mut t = Tally::default();
    let mut cells = fixture_cells(seeds);
    for seed in 0..random_domains {
        let w = random_world(20_000 + seed);
        cells.push((format!("random {seed}"), w.instance, w.domain, w.config, None));
    }
    let (mut calls_on, mut calls_off, mut differ, mut deferred) = (0, 0, 0, 0);
    for (name, inst, domain, cfg, _) in cells {
        let mut on = cfg.clone();
        on.screening = true;
        let mut off = cfg;
        off.screening = false;
        let (ra, ta, _) = solve(&inst, &domain, &on);
        let (rb, tb, _) = solve(&inst, &domain, &off);
        t.cases += 1;
        calls_on += ra.counters.verifier_calls;
        calls_off += rb.counters.verifier_calls;
        deferred += ra.counters.deferred;
        differ += usize::from(ra.counters.verifier_calls != rb.counters.verifier_calls);
        if ra.outcome.status() != rb.outcome.status() {
            t.fail(format!("{name}: {} with screening, {} without", ra.outcome.status(), rb.outcome.status()));
        }
        let (va, vb) = (verdicts(&ra, &ta), verdicts(&rb, &tb));
        for (k, a) in &va {
            if let Some(b) = vb.get(k) {
                if a != b {
                    t.fail(format!("{name}: verdict on {k:?} flipped"));
                }
            }
        }
    }
    t.note = format!(
        "verifier calls {calls_on} screened vs {calls_off} unscreened, {differ} runs differ, {deferred} meets deferred"
    );
    t
}

pub fn family_report(seeds: &[u64]) -> RunReport {
    let fixtures: Vec<Fixture> = family();
    let mut runs = Vec::new();
    for fx in &fixtures {
        let report = run_sweep(
            std::slice::from_ref(&fx.instance),
            &KSelection::All,
            seeds,
            &mut super::planner(fx, &fx.config),
        )
        .unwrap();
        runs.extend(report.runs);
    }
    querybridge_core::bench::sweep::build_report(runs)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            out[*k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Mean queries and hypotheses never fall as more preconditions are hidden.
pub fn fig2_trend(seeds: &[u64]) -> Tally {
    let mut t = Tally::default();
    let report = family_report(seeds);
    t.cases = report.runs.len();
    let levels: Vec<usize> = report.by_hidden.iter().map(|l| l.level).collect();
    if levels != (0..=5).collect::<Vec<_>>() {
        t.fail(format!("hidden levels {levels:?}"));
    }
    for w in report.by_hidden.windows(2) {
        if w[1].mean_queries < w[0].mean_queries {
            t.fail(format!("queries fall from hidden {} to {}", w[0].level, w[1].level));
        }
        if w[1].mean_hypotheses < w[0].mean_hypotheses {
            t.fail(format!("hypotheses fall from hidden {} to {}", w[0].level, w[1].level));
        }
    }
    let x: Vec<f64> = report.runs.iter().map(|r| r.hidden as f64).collect();
    let y: Vec<f64> = report.runs.iter().map(|r| r.queries as f64).collect();
    let rho = spearman(&x, &y);
    if rho.is_nan() || rho < 0.9 {
        t.fail(format!("spearman {rho:.3} < 0.9"));
    }
    let q: Vec<String> = report.by_hidden.iter().map(|l| format!("{:.1}", l.mean_queries)).collect();
    let h: Vec<String> = report.by_hidden.iter().map(|l| format!("{:.1}", l.mean_hypotheses)).collect();
    t.note = format!("rho {rho:.3}, queries [{}], hypotheses [{}]", q.join(" "), h.join(" "));
    t
}

pub fn latent_names() -> &'static [&'static str] {
    &LATENT
}
