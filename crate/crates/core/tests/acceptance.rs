//! One test per acceptance criterion. Each prints a single
//! `PASS`/`FAIL` line before asserting.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmdp::envs::*;
use rmdp::generate::{random_any, random_deterministic, random_single_exit};
use rmdp::learn::*;
use rmdp::oracle::*;
use rmdp::semantics::{decision_step, decision_step_with, initial_config, needs_decision};
use rmdp::text::{parse, serialize};
use rmdp::transforms::{hierarchical_chain, Monitor, MonitorState};
use rmdp::{ComponentId, Rmdp, RmdpBuilder, VRef, Vertex};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    // Straight to stderr, past the harness's output capture, so the line
    // shows up for passing tests too.
    let _ = writeln!(std::io::stderr(), "{tag} criterion {id:02} {name}: {detail}");
    assert!(pass, "criterion {id} failed: {detail}");
}

/// Exit value of `T` obtained by hand: each of the three server calls
/// takes the reliable branch, pays the interrupt handler's never-upgrade
/// value and the +0.2 return bonus with probability 0.3.
fn cloud_by_hand() -> f64 {
    // h = -0.01 + 0.3 * 2h  (two nested calls, both exiting at u6)
    let h = -0.01 / (1.0 - 0.6);
    let s = -1.5 + 0.3 * (h + 0.2);
    -0.5 + 3.0 * s - 0.5
}

fn start_of(m: &Rmdp) -> (ComponentId, rmdp::NodeId) {
    (ComponentId(0), m.component(ComponentId(0)).entries[0])
}

#[test]
fn c01_cloud_value_exact() {
    let want = cloud_by_hand();
    assert!((want + 5.3425).abs() < 1e-12);
    let m = cloud_rmdp();
    let t = Instant::now();
    let sol = solve_truncated(&m, 30, 1e-10).unwrap();
    let elapsed = t.elapsed();
    let got = sol.value_at(m.vertex_by_label("u1").unwrap());
    let pass = (got - want).abs() <= 1e-6 && elapsed < Duration::from_secs(5);
    report(
        1,
        "cloud value",
        pass,
        format!("solve_truncated(30) = {got:.12}, target {want}, |diff| = {:.3e}, {elapsed:.2?}", (got - want).abs()),
    );
}

#[test]
fn c02_cloud_learning() {
    let spec = cloud_spec();
    let m = &spec.model;
    let target = cloud_by_hand();
    let t = Instant::now();
    let act = |s: &str| m.action_by_name(s).unwrap();
    let want: BTreeMap<Vertex, BTreeSet<_>> = [("u1", "d"), ("u3", "r"), ("u5", "n")]
        .into_iter()
        .map(|(v, a)| (m.vertex_by_label(v).unwrap(), BTreeSet::from([act(a)])))
        .collect();
    let mut finals = Vec::new();
    let mut policy_ok = 0;
    for seed in 0..10 {
        let mut h = spec.hyperparameters.clone();
        h.seed = seed;
        assert!(h.total_steps >= 200_000);
        let res = rql_train(m, &h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        finals.push(evaluate(m, &res.q, &h, 5000, &mut rng).unwrap().mean);
        let seen = greedy_choices(m, &res.q, &h, 500, seed).unwrap();
        if want.iter().all(|(v, a)| seen.get(v) == Some(a)) {
            policy_ok += 1;
        }
    }
    let elapsed = t.elapsed();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let pass = (mean - target).abs() <= 0.05 && policy_ok >= 9 && elapsed < Duration::from_secs(300);
    report(
        2,
        "cloud learning",
        pass,
        format!("mean greedy return {mean:.4} (target {target}), policy {{d, r, n}} on {policy_ok}/10 seeds, {elapsed:.1?}"),
    );
}

#[test]
fn c03_succinct_chain() {
    let mut exact = true;
    let mut detail = String::new();
    for n in 1..=10usize {
        let m = hierarchical_chain(n);
        let c = ComponentId((n - 1) as u32);
        let en = m.node_by_name(&format!("e{n}")).unwrap();
        let v = solve_deterministic(&m, n + 1).unwrap().value(c, en);
        if v != Some(((1u64 << n) - 1) as f64) {
            exact = false;
            detail += &format!(" n={n}: {v:?}");
        }
    }
    let mut learned = true;
    for n in 1..=6usize {
        let m = hierarchical_chain(n);
        let c = ComponentId((n - 1) as u32);
        let en = m.node_by_name(&format!("e{n}")).unwrap();
        let mut h = Hyperparameters::new((c, en));
        h.learning_rate = LearningRate::Constant(1.0);
        h.exploration = Exploration::constant(0.1);
        h.total_steps = 20_000 * n as u64;
        h.eval_every = Some(h.total_steps);
        h.eval_episodes = 1;
        h.seed = n as u64;
        let res = rql_train(&m, &h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = evaluate(&m, &res.q, &h, 1, &mut rng).unwrap().mean;
        let q = res.q.max(Vertex::Node(en), &vec![0, 0]);
        let want = ((1u64 << n) - 1) as f64;
        if got != want || q != want {
            learned = false;
            detail += &format!(" rql n={n}: greedy {got}, Q(start) {q}");
        }
    }
    report(
        3,
        "succinct chain",
        exact && learned,
        format!("solve_deterministic = 2^n - 1 for n <= 10: {exact}; alpha = 1 greedy value and learned start value match for n <= 6: {learned}{detail}"),
    );
}

#[test]
fn c04_single_exit_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_residual: f64 = 0.0;
    let mut dominated = true;
    let mut converged = 0;
    let mut errors = Vec::new();
    for i in 0..20u64 {
        let m = random_single_exit(&mut rng);
        let sol = solve_1exit(&m).unwrap();
        worst_residual = worst_residual.max(sol.residual);
        let decisions: Vec<Vertex> = m.all_vertices().into_iter().filter(|&v| !m.enabled_actions(v).is_empty()).collect();
        for _ in 0..200 {
            let sigma: BTreeMap<_, _> = decisions
                .iter()
                .map(|&v| {
                    let acts = m.enabled_actions(v);
                    (v, acts[rng.gen_range(0..acts.len())])
                })
                .collect();
            let x = eval_stackless(&m, &sigma).unwrap();
            if x.iter().any(|(v, val)| *val > sol.value(*v) + 1e-9) {
                dominated = false;
            }
        }
        let (c, en) = start_of(&m);
        let mut h = Hyperparameters::new((c, en));
        h.learning_rate = LearningRate::VisitPower(0.7);
        h.exploration = Exploration::constant(0.3);
        h.exploring_starts = true;
        h.total_steps = 300_000;
        h.eval_every = Some(h.total_steps);
        h.eval_episodes = 1;
        h.seed = i;
        let res = rql1_train(&m, &h).unwrap();
        let v = Vertex::Node(en);
        let err = (res.q.max(v, &vec![]) - sol.value(v)).abs();
        if err <= 0.05 {
            converged += 1;
        }
        errors.push(err);
    }
    let worst_err = errors.iter().copied().fold(0.0, f64::max);
    let pass = worst_residual <= 1e-9 && dominated && converged >= 18;
    report(
        4,
        "1-exit fixed point",
        pass,
        format!(
            "max residual {worst_residual:.2e}, dominates 200 random strategies on all 20: {dominated}, learned within 0.05 on {converged}/20 (worst {worst_err:.4})"
        ),
    );
}

#[test]
fn c05_alg1_alg2_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut identical = 0;
    for i in 0..5u64 {
        let m = random_single_exit(&mut rng);
        let mut h = Hyperparameters::new(start_of(&m));
        h.learning_rate = LearningRate::Constant(0.3);
        h.exploration = Exploration::constant(0.2);
        h.exploring_starts = true;
        h.total_steps = 10_000;
        h.eval_episodes = 5;
        h.seed = 500 + i;
        let a = rql_train(&m, &h).unwrap();
        let b = rql1_train(&m, &h).unwrap();
        let strip = |q: &QTable, key: Vec<u64>| -> Option<Vec<(Vertex, _, u64)>> {
            q.entries(&m)
                .into_iter()
                .map(|(v, k, act, x)| (k.iter().map(|&z| z as u64).collect::<Vec<_>>() == key).then_some((v, act, x.to_bits())))
                .collect()
        };
        let ea = strip(&a.q, vec![0]);
        let eb = strip(&b.q, vec![]);
        if ea.is_some() && ea == eb && a.curve == b.curve {
            identical += 1;
        }
    }
    report(5, "Alg1/Alg2 equivalence", identical == 5, format!("bit-identical Q-tables and curves on {identical}/5 models after 10^4 steps"));
}

#[test]
fn c06_truncated_matches_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut stable = true;
    let mut checked = 0;
    for _ in 0..10 {
        let m = random_deterministic(&mut rng);
        let depth = m.components().len() + 1;
        let det = solve_deterministic(&m, depth).unwrap();
        let a = solve_truncated(&m, depth, 1e-12).unwrap();
        let b = solve_truncated(&m, depth + 1, 1e-12).unwrap();
        for (&(c, en), &v) in &det.values {
            let _ = c;
            let q = Vertex::Node(en);
            let (ya, yb) = (a.value_at(q), b.value_at(q));
            if ya != yb {
                stable = false;
            }
            worst = worst.max((ya - v).abs());
            checked += 1;
        }
    }
    let pass = stable && worst <= 1e-9;
    report(
        6,
        "truncated vs deterministic",
        pass,
        format!("{checked} entries on 10 models, stable in bound: {stable}, max |diff| {worst:.2e}"),
    );
}

#[test]
fn c07_product_matches_monitor() {
    let p = palindrome_product();
    let grid = palindrome_grid();
    let pda = palindrome_pda();
    let opts = palindrome_options();
    let mon = Monitor::new(&grid, &pda, &opts).unwrap();
    let m = &p.model;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut steps = 0usize;
    for _ in 0..10_000 {
        let mut c = initial_config(m, p.start.0, p.start.1).unwrap();
        let mut st = mon.start();
        let mut product_stream = Vec::new();
        let mut monitor_stream = Vec::new();
        let mut ok = p.decode(&c) == st;
        for _ in 0..40 {
            if c.terminated || !ok {
                break;
            }
            if st == MonitorState::Rejected {
                // The product unwinds its stack with zero-reward steps.
                let out = decision_step(m, &c, p.sink_action, &mut rng).unwrap();
                ok &= out.reward == 0.0;
                c = out.next;
                continue;
            }
            if st == MonitorState::Accepted || !needs_decision(m, &c) {
                ok = false;
                break;
            }
            let names = mon.actions(&st);
            let name = names[rng.gen_range(0..names.len())].clone();
            let a = m.action_by_name(&name).unwrap();
            let (reward, dist) = mon.outcomes(&st, &name).unwrap();
            let u: f64 = rng.gen();
            let out = decision_step_with(m, &c, a, u).unwrap();
            product_stream.push(out.reward);
            monitor_stream.push(reward);
            let next = p.decode(&out.next);
            ok &= dist.iter().any(|(s, q)| *s == next && *q > 0.0);
            c = out.next;
            st = next;
            steps += 1;
        }
        if !ok || product_stream != monitor_stream {
            mismatches += 1;
        }
    }
    report(
        7,
        "PDA product equivalence",
        mismatches == 0,
        format!("10000 random action sequences ({steps} steps), {mismatches} reward-stream mismatches"),
    );
}

fn self_call(p: f64) -> Rmdp {
    let mut b = RmdpBuilder::new();
    b.entry("S", "en").exit("S", "ex").add_box("S", "k", "S");
    b.transition("S", VRef::node("en"), "a", &[(VRef::port("k", "en"), p), (VRef::node("ex"), 1.0 - p)], -1.0);
    b.edge("S", VRef::port("k", "ex"), "a", VRef::node("ex"), 0.0);
    b.build_validated().unwrap()
}

#[test]
fn c08_pac_single_exit() {
    let m = self_call(0.4);
    let truth = -5.0 / 3.0;
    let en = m.vertex_by_label("en").unwrap();
    let sigma: BTreeMap<_, _> = m.all_vertices().into_iter().filter_map(|v| m.enabled_actions(v).first().map(|&a| (v, a))).collect();
    let k = expected_steps(&m, &sigma).unwrap().values().copied().fold(0.0, f64::max);
    let (eps, delta) = (0.2, 0.05);
    let mut misses = 0;
    let mut n = 0;
    for run in 0..100u64 {
        let mut sampler = ModelSampler {
            model: &m,
            rng: ChaCha8Rng::seed_from_u64(10_000 + run),
        };
        let r = pac_learn_1exit(&mut sampler, &m, eps, delta, k, 1.0).unwrap();
        n = r.n;
        if (r.values[&en] - truth).abs() > eps {
            misses += 1;
        }
    }
    // 100 runs failing independently with probability delta: mean 5,
    // P[X > 10] < 0.012.
    report(
        8,
        "PAC 1-exit",
        misses <= 10,
        format!("{misses}/100 runs off by more than {eps} ({n} samples per row)"),
    );
}

fn curve_mean(c: &LearningCurve) -> f64 {
    c.points.iter().map(|p| p.mean).sum::<f64>() / c.points.len() as f64
}

#[test]
fn c09_spelunking() {
    let s = spelunking();
    let spec = spelunking_spec();
    let t = Instant::now();
    let mut over = 0;
    let mut ahead = 0;
    let mut margins = Vec::new();
    let mut finals = Vec::new();
    for seed in 0..10 {
        let mut h = spec.hyperparameters.clone();
        h.seed = seed;
        let r = rql1_train(&s.model, &h).unwrap();
        let f = flat_q_train(&s.model, &h).unwrap();
        if s.strategy_class(|v| r.q.argmax(&s.model, v, &vec![])) == StrategyClass::OverTraps {
            over += 1;
        }
        let margin = curve_mean(&r.curve) - curve_mean(&f.curve);
        if margin > 0.0 {
            ahead += 1;
        }
        margins.push(margin);
        finals.push((r.curve.last().unwrap().mean, f.curve.last().unwrap().mean));
    }
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let final_rql = finals.iter().map(|x| x.0).sum::<f64>() / 10.0;
    let final_flat = finals.iter().map(|x| x.1).sum::<f64>() / 10.0;
    report(
        9,
        "spelunking",
        over == 10 && ahead == 10,
        format!(
            "over-traps on {over}/10 seeds, mean evaluated return over training ahead of flat Q on {ahead}/10 (min margin {min_margin:.2}); last point {final_rql:.2} vs {final_flat:.2}; {:.1?}",
            t.elapsed()
        ),
    );
}

/// The monitor accepts nothing before the first move, so declaring at the
/// first decision always rejects.
fn declare_immediately(p: &rmdp::transforms::Product, episodes: usize) -> f64 {
    let m = &p.model;
    let declare = m.action_by_name("declare").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut c = initial_config(m, p.start.0, p.start.1).unwrap();
        while !c.terminated {
            let acts = m.enabled_actions(c.vertex);
            let a = if acts.contains(&declare) {
                declare
            } else if acts.contains(&p.sink_action) {
                p.sink_action
            } else {
                acts[0]
            };
            let out = decision_step(m, &c, a, &mut rng).unwrap();
            total += out.reward;
            c = out.next;
        }
    }
    total / episodes as f64
}

#[test]
fn c10_palindrome() {
    let p = palindrome_product();
    let spec = palindrome_spec();
    let m = &p.model;
    let baseline = declare_immediately(&p, 20_000);
    let t = Instant::now();
    let (mut rql, mut flat) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let mut h = spec.hyperparameters.clone();
        h.seed = seed;
        let r = rql_train(m, &h).unwrap();
        let f = flat_q_train(m, &h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        rql.push(evaluate(m, &r.q, &h, 1000, &mut rng).unwrap().mean);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        flat.push(evaluate(m, &f.q, &h, 1000, &mut rng).unwrap().mean);
    }
    let elapsed = t.elapsed();
    let mr = rql.iter().sum::<f64>() / 10.0;
    let mf = flat.iter().sum::<f64>() / 10.0;
    report(
        10,
        "palindrome",
        mr > baseline && mr > mf && elapsed < Duration::from_secs(900),
        format!("RQL mean return {mr:.3}, flat Q {mf:.3}, declare-immediately {baseline:.3}; {elapsed:.1?}"),
    );
}

#[test]
fn c11_parser_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = 0;
    for _ in 0..1000 {
        let m = random_any(&mut rng);
        match parse(&serialize(&m)) {
            Ok(back) if back == m => {}
            _ => failures += 1,
        }
    }
    report(11, "parser round trip", failures == 0, format!("1000 random models, {failures} failures"));
}
