//! Random model generators for property tests and benchmarks.
//!
//! Inside each component the vertices are laid out in a random order and
//! rows only lead forward, so a component is left after finitely many local
//! steps and each of its boxes is called at most once per visit.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{Rmdp, RmdpBuilder, VRef};

#[derive(Clone, Debug)]
pub struct Shape {
    pub components: (usize, usize),
    pub entries: (usize, usize),
    pub exits: (usize, usize),
    pub nodes: (usize, usize),
    pub boxes: (usize, usize),
    pub actions: (usize, usize),
    /// Destinations per row; 1 gives a deterministic model.
    pub dests: (usize, usize),
    pub reward: (f64, f64),
    /// Boxes call only components with a smaller index.
    pub lower_callees: bool,
    /// Rows may also lead backwards (no termination guarantee).
    pub cyclic: bool,
    /// Total call probability over all rows of one component visit.
    pub call_budget: Option<f64>,
    /// Upper bound on the number of vertices of the whole model.
    pub max_vertices: usize,
}

impl Shape {
    /// Proper 1-exit models: the expected number of calls made during one
    /// visit of a component is at most 0.9, whatever the strategy.
    pub fn single_exit() -> Self {
        Shape {
            components: (1, 3),
            entries: (1, 1),
            exits: (1, 1),
            nodes: (0, 2),
            boxes: (0, 2),
            actions: (1, 3),
            dests: (1, 3),
            reward: (-2.0, 2.0),
            lower_callees: false,
            cyclic: false,
            call_budget: Some(0.9),
            max_vertices: 10,
        }
    }

    /// Deterministic multi-exit models whose call graph is acyclic.
    pub fn deterministic() -> Self {
        Shape {
            components: (1, 4),
            entries: (1, 2),
            exits: (1, 3),
            nodes: (0, 3),
            boxes: (0, 2),
            actions: (1, 3),
            dests: (1, 1),
            reward: (-2.0, 2.0),
            lower_callees: true,
            cyclic: false,
            call_budget: None,
            max_vertices: 40,
        }
    }

    /// Arbitrary well-formed models, used for format round trips.
    pub fn any() -> Self {
        Shape {
            components: (1, 4),
            entries: (1, 3),
            exits: (0, 3),
            nodes: (0, 4),
            boxes: (0, 3),
            actions: (1, 3),
            dests: (1, 4),
            reward: (-100.0, 100.0),
            lower_callees: false,
            cyclic: true,
            call_budget: None,
            max_vertices: 80,
        }
    }
}

pub fn random_single_exit<R: Rng>(rng: &mut R) -> Rmdp {
    random_model(rng, &Shape::single_exit())
}

pub fn random_deterministic<R: Rng>(rng: &mut R) -> Rmdp {
    random_model(rng, &Shape::deterministic())
}

pub fn random_any<R: Rng>(rng: &mut R) -> Rmdp {
    random_model(rng, &Shape::any())
}

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Node(usize),
    Box(usize),
}

struct Comp {
    entries: usize,
    exits: usize,
    nodes: usize,
    boxes: Vec<usize>,
    order: Vec<Slot>,
}

fn draw<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi.max(lo))
}

fn vertex_count(comps: &[Comp]) -> usize {
    comps
        .iter()
        .map(|c| c.entries + c.exits + c.nodes + c.boxes.iter().map(|&t| comps[t].entries + comps[t].exits).sum::<usize>())
        .sum()
}

/// Draws a model of the given shape; retries until the vertex bound holds.
pub fn random_model<R: Rng>(rng: &mut R, shape: &Shape) -> Rmdp {
    loop {
        if let Some(m) = attempt(rng, shape) {
            return m;
        }
    }
}

fn attempt<R: Rng>(rng: &mut R, s: &Shape) -> Option<Rmdp> {
    let k = draw(rng, s.components);
    let mut comps: Vec<Comp> = (0..k)
        .map(|_| Comp {
            entries: draw(rng, s.entries).max(1),
            exits: draw(rng, s.exits),
            nodes: draw(rng, s.nodes),
            boxes: Vec::new(),
            order: Vec::new(),
        })
        .collect();
    for i in 0..k {
        let nb = if s.lower_callees && i == 0 { 0 } else { draw(rng, s.boxes) };
        for _ in 0..nb {
            let t = if s.lower_callees { rng.gen_range(0..i) } else { rng.gen_range(0..k) };
            comps[i].boxes.push(t);
        }
        let mut order: Vec<Slot> = (0..comps[i].nodes).map(Slot::Node).chain((0..nb).map(Slot::Box)).collect();
        order.shuffle(rng);
        comps[i].order = order;
    }
    if vertex_count(&comps) > s.max_vertices {
        return None;
    }

    let cname = |i: usize| format!("C{i}");
    let entry = |i: usize, e: usize| format!("c{i}_en{e}");
    let exit = |i: usize, x: usize| format!("c{i}_ex{x}");
    let node = |i: usize, n: usize| format!("c{i}_n{n}");
    let bname = |i: usize, j: usize| format!("c{i}_b{j}");
    let actions = ["a", "b", "c", "d"];

    let mut b = RmdpBuilder::new();
    for i in 0..k {
        b.component(&cname(i));
    }
    for (i, c) in comps.iter().enumerate() {
        let cn = cname(i);
        for e in 0..c.entries {
            b.entry(&cn, &entry(i, e));
        }
        for x in 0..c.exits {
            b.exit(&cn, &exit(i, x));
        }
        for n in 0..c.nodes {
            b.node(&cn, &node(i, n));
        }
        for (j, &t) in c.boxes.iter().enumerate() {
            b.add_box(&cn, &bname(i, j), &cname(t));
        }

        // Destinations reachable from slot position `p` (entries sit at -1).
        let targets = |p: isize, rng: &mut R| -> Vec<(VRef, bool)> {
            let mut out = Vec::new();
            for (q, slot) in c.order.iter().enumerate() {
                if !s.cyclic && (q as isize) <= p {
                    continue;
                }
                match *slot {
                    Slot::Node(n) => out.push((VRef::node(node(i, n)), false)),
                    Slot::Box(j) => {
                        let t = c.boxes[j];
                        let e = rng.gen_range(0..comps[t].entries);
                        out.push((VRef::port(bname(i, j), entry(t, e)), true));
                    }
                }
            }
            for x in 0..c.exits {
                out.push((VRef::node(exit(i, x)), false));
            }
            out
        };

        let mut sources: Vec<(VRef, isize)> = (0..c.entries).map(|e| (VRef::node(entry(i, e)), -1)).collect();
        for (q, slot) in c.order.iter().enumerate() {
            match *slot {
                Slot::Node(n) => sources.push((VRef::node(node(i, n)), q as isize)),
                Slot::Box(j) => {
                    let t = c.boxes[j];
                    for x in 0..comps[t].exits {
                        sources.push((VRef::port(bname(i, j), exit(t, x)), q as isize));
                    }
                }
            }
        }
        let per_row_calls = s.call_budget.map(|budget| budget / sources.len().max(1) as f64);

        for (src, p) in sources {
            let avail = targets(p, rng);
            if avail.is_empty() {
                return None;
            }
            let na = draw(rng, s.actions).clamp(1, actions.len());
            for &a in &actions[..na] {
                let nd = draw(rng, s.dests).clamp(1, avail.len());
                let mut picks: Vec<(VRef, bool)> = avail.choose_multiple(rng, nd).cloned().collect();
                let mut w: Vec<f64> = (0..picks.len()).map(|_| rng.gen_range(1..=8) as f64).collect();
                if let Some(cap) = per_row_calls {
                    let fallback = avail.iter().rev().find(|(_, call)| !call).cloned();
                    limit_calls(&mut picks, &mut w, cap, fallback);
                }
                let total: f64 = w.iter().sum();
                let row: Vec<(VRef, f64)> = picks.into_iter().map(|(v, _)| v).zip(w.iter().map(|x| x / total)).collect();
                let r = round2(rng.gen_range(s.reward.0..=s.reward.1));
                b.transition(&cn, src.clone(), a, &row, r);
            }
        }
    }
    let m = b.build().ok()?;
    if !m.validate().is_empty() || m.all_vertices().len() > s.max_vertices {
        return None;
    }
    Some(m)
}

/// Scales weights so that call destinations carry at most `cap` of the mass.
fn limit_calls(picks: &mut Vec<(VRef, bool)>, w: &mut Vec<f64>, cap: f64, fallback: Option<(VRef, bool)>) {
    let total: f64 = w.iter().sum();
    let calls: f64 = picks.iter().zip(w.iter()).filter(|((_, c), _)| *c).map(|(_, x)| x).sum();
    if calls / total <= cap {
        return;
    }
    let rest = total - calls;
    if rest == 0.0 {
        let Some(fb) = fallback else { return };
        picks.push(fb);
        w.push(calls * (1.0 - cap) / cap);
        return;
    }
    // calls' / (calls' + rest) = cap
    let scale = cap * rest / ((1.0 - cap) * calls);
    for ((_, c), x) in picks.iter().zip(w.iter_mut()) {
        if *c {
            *x *= scale;
        }
    }
}

fn round2(x: f64) -> f64 {
    // + 0.0 turns -0.0 into 0.0
    (x * 100.0).round() / 100.0 + 0.0
}
