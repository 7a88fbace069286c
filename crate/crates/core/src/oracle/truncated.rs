//! Optimal values on the configurations whose stack height stays within a
//! bound. Calls that would exceed the bound are valued 0.
//!
//! A configuration's value depends on its stack only through the height and
//! the exit values of the innermost frame, so the solver works on frames
//! `(component, remaining depth, exit values)`. Frames are shared between exit
//! vectors that fall in the same grid cell. Each frame stores, per vertex, the
//! affine function of the exit values realised by its chosen strategy, and a
//! shared frame is always read back through that function at the caller's
//! true exit vector.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use super::{require_valid, OracleError};
use crate::model::{ActionId, BoxId, ComponentId, Rmdp, Vertex};
use crate::semantics::Configuration;

#[derive(Clone, Debug)]
pub struct TruncatedOptions {
    /// Maximum stack height; the empty stack has height 1.
    pub bound: usize,
    /// Sweeps inside a cyclic strongly connected block stop once the largest
    /// change is below `tol`.
    pub tol: f64,
    /// Cell width for sharing frames between exit-value vectors.
    pub grid: f64,
    /// Restrict every decision vertex to this action.
    pub strategy: Option<BTreeMap<Vertex, ActionId>>,
    pub max_frames: usize,
    pub max_sweeps: usize,
}

impl TruncatedOptions {
    pub fn new(bound: usize, tol: f64) -> Self {
        TruncatedOptions {
            bound,
            tol,
            grid: 1e-4,
            strategy: None,
            max_frames: 5_000_000,
            max_sweeps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Piece {
    c: f64,
    a: Vec<f64>,
}

impl Piece {
    fn zero(k: usize) -> Self {
        Piece { c: 0.0, a: vec![0.0; k] }
    }

    fn eval(&self, w: &[f64]) -> f64 {
        self.c + self.a.iter().zip(w).map(|(a, w)| a * w).sum::<f64>()
    }

    fn add_scaled(&mut self, p: f64, other: &Piece) {
        self.c += p * other.c;
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += p * y;
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Exit(usize),
    Call { callee: ComponentId, en: usize, rets: Vec<usize> },
    Decision { actions: Vec<ActionId>, rows: Vec<(f64, Vec<(usize, f64)>)> },
}

#[derive(Debug)]
struct Local {
    verts: Vec<Vertex>,
    kinds: Vec<Kind>,
    exits: usize,
    /// Strongly connected blocks, successors first, with a cyclic flag.
    blocks: Vec<(Vec<usize>, bool)>,
}

struct Frame {
    pieces: Vec<Piece>,
    choice: Vec<Option<ActionId>>,
}

type Key = (ComponentId, usize, Vec<i64>);

struct Solver {
    locals: Vec<Local>,
    index: HashMap<Vertex, (ComponentId, usize)>,
    opts: TruncatedOptions,
    memo: HashMap<Key, Rc<Frame>>,
}

impl Solver {
    fn new(m: &Rmdp, opts: TruncatedOptions) -> Result<Self, OracleError> {
        let mut index = HashMap::new();
        for c in m.component_ids() {
            for (i, v) in m.vertices(c).into_iter().enumerate() {
                index.insert(v, (c, i));
            }
        }
        let mut locals = Vec::new();
        for c in m.component_ids() {
            let verts = m.vertices(c);
            let at = |v: Vertex| index[&v].1;
            let comp = m.component(c);
            let mut kinds = Vec::with_capacity(verts.len());
            for &q in &verts {
                let kind = match q {
                    Vertex::Node(n) if m.is_exit(n) => Kind::Exit(m.exit_index(n).expect("exit")),
                    Vertex::Call(b, en) => {
                        let callee = m.box_target(b).expect("validated");
                        let rets = m.return_ports(b).expect("validated").into_iter().map(at).collect();
                        Kind::Call {
                            callee,
                            en: index[&Vertex::Node(en)].1,
                            rets,
                        }
                    }
                    _ => {
                        let mut actions: Vec<ActionId> = m.enabled_actions(q).to_vec();
                        if let Some(sigma) = &opts.strategy {
                            let a = *sigma
                                .get(&q)
                                .ok_or_else(|| OracleError::StrategyIncomplete(m.vertex_label(q)))?;
                            if !actions.contains(&a) {
                                return Err(OracleError::StrategyIncomplete(m.vertex_label(q)));
                            }
                            actions = vec![a];
                        }
                        let rows = actions
                            .iter()
                            .map(|&a| {
                                let row = m.row(q, a).expect("enabled");
                                (row.reward, row.dests.iter().map(|&(d, p)| (at(d), p)).collect())
                            })
                            .collect();
                        Kind::Decision { actions, rows }
                    }
                };
                kinds.push(kind);
            }
            let blocks = blocks(&kinds);
            locals.push(Local {
                verts,
                kinds,
                exits: comp.exits.len(),
                blocks,
            });
        }
        Ok(Solver {
            locals,
            index,
            opts,
            memo: HashMap::new(),
        })
    }

    fn key(&self, c: ComponentId, remaining: usize, w: &[f64]) -> Result<Key, OracleError> {
        let g = self.opts.grid;
        let mut cells = Vec::with_capacity(w.len());
        for &x in w {
            let cell = (x / g).round();
            if !cell.is_finite() || cell.abs() > 9.0e18 {
                return Err(OracleError::NotConverged(format!("exit value {x} out of range")));
            }
            cells.push(cell as i64);
        }
        Ok((c, remaining, cells))
    }

    fn frame(&mut self, c: ComponentId, remaining: usize, w: &[f64]) -> Result<Rc<Frame>, OracleError> {
        let key = self.key(c, remaining, w)?;
        if let Some(f) = self.memo.get(&key) {
            return Ok(Rc::clone(f));
        }
        if self.memo.len() >= self.opts.max_frames {
            return Err(OracleError::NotConverged(format!(
                "more than {} frames",
                self.opts.max_frames
            )));
        }
        let centre: Vec<f64> = key.2.iter().map(|&x| x as f64 * self.opts.grid).collect();
        let frame = Rc::new(self.compute(c, remaining, &centre)?);
        self.memo.insert(key, Rc::clone(&frame));
        Ok(frame)
    }

    fn compute(&mut self, c: ComponentId, remaining: usize, w: &[f64]) -> Result<Frame, OracleError> {
        let local = &self.locals[c.index()];
        let n = local.kinds.len();
        let k = local.exits;
        let blocks = local.blocks.clone();
        let mut pieces = vec![Piece::zero(k); n];
        let mut values = vec![0.0; n];
        let mut choice = vec![None; n];
        for (block, cyclic) in blocks {
            if !cyclic {
                self.update(c, remaining, w, block[0], &mut pieces, &mut values, &mut choice)?;
                continue;
            }
            let mut sweeps = 0;
            loop {
                let mut delta: f64 = 0.0;
                for &i in &block {
                    let old = values[i];
                    let old_a = pieces[i].a.clone();
                    self.update(c, remaining, w, i, &mut pieces, &mut values, &mut choice)?;
                    delta = delta.max((values[i] - old).abs());
                    for (x, y) in old_a.iter().zip(&pieces[i].a) {
                        delta = delta.max((x - y).abs());
                    }
                }
                if !delta.is_finite() || values.iter().any(|v| v.abs() > 1e15) {
                    return Err(OracleError::NotConverged("values diverged".into()));
                }
                if delta < self.opts.tol {
                    break;
                }
                sweeps += 1;
                if sweeps >= self.opts.max_sweeps {
                    return Err(OracleError::NotConverged(format!("no convergence after {sweeps} sweeps")));
                }
            }
        }
        Ok(Frame { pieces, choice })
    }

    #[allow(clippy::too_many_arguments)]
    fn update(
        &mut self,
        c: ComponentId,
        remaining: usize,
        w: &[f64],
        i: usize,
        pieces: &mut [Piece],
        values: &mut [f64],
        choice: &mut [Option<ActionId>],
    ) -> Result<(), OracleError> {
        let k = w.len();
        let kind = self.locals[c.index()].kinds[i].clone();
        let piece = match kind {
            Kind::Exit(e) => {
                let mut p = Piece::zero(k);
                p.a[e] = 1.0;
                p
            }
            Kind::Call { callee, en, rets } => {
                if remaining == 0 {
                    Piece::zero(k)
                } else {
                    let w2: Vec<f64> = rets.iter().map(|&r| values[r]).collect();
                    let child = self.frame(callee, remaining - 1, &w2)?;
                    let inner = &child.pieces[en];
                    let mut p = Piece { c: inner.c, a: vec![0.0; k] };
                    for (&coef, &r) in inner.a.iter().zip(&rets) {
                        p.add_scaled(coef, &pieces[r]);
                    }
                    p
                }
            }
            Kind::Decision { actions, rows } => {
                let mut best: Option<(f64, Piece, ActionId)> = None;
                for (a, (reward, dests)) in actions.iter().zip(&rows) {
                    let mut p = Piece { c: *reward, a: vec![0.0; k] };
                    for &(d, prob) in dests {
                        p.add_scaled(prob, &pieces[d]);
                    }
                    let v = p.eval(w);
                    if best.as_ref().map_or(true, |(bv, _, _)| v > *bv) {
                        best = Some((v, p, *a));
                    }
                }
                let (_, p, a) = best.expect("decision vertex has an action");
                choice[i] = Some(a);
                p
            }
        };
        values[i] = piece.eval(w);
        pieces[i] = piece;
        Ok(())
    }
}

/// Tarjan's algorithm; blocks come out successors first.
fn blocks(kinds: &[Kind]) -> Vec<(Vec<usize>, bool)> {
    let succ: Vec<Vec<usize>> = kinds
        .iter()
        .map(|k| match k {
            Kind::Exit(_) => Vec::new(),
            Kind::Call { rets, .. } => rets.clone(),
            Kind::Decision { rows, .. } => rows.iter().flat_map(|(_, d)| d.iter().map(|&(j, _)| j)).collect(),
        })
        .collect();
    let n = kinds.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (vertex, next successor position)
        let mut work = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = work.last_mut() {
            if *pos < succ[v].len() {
                let u = succ[v][*pos];
                *pos += 1;
                if index[u] == usize::MAX {
                    index[u] = next;
                    low[u] = next;
                    next += 1;
                    stack.push(u);
                    on_stack[u] = true;
                    work.push((u, 0));
                } else if on_stack[u] {
                    low[v] = low[v].min(index[u]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut block = Vec::new();
                    loop {
                        let u = stack.pop().expect("tarjan stack");
                        on_stack[u] = false;
                        block.push(u);
                        if u == v {
                            break;
                        }
                    }
                    block.sort_unstable();
                    let cyclic = block.len() > 1 || succ[v].contains(&v);
                    out.push((block, cyclic));
                }
            }
        }
    }
    out
}

/// Values of the bounded-height configurations.
pub struct TruncatedSolution {
    /// `y(<>, q)` for every vertex of every component.
    pub values: BTreeMap<Vertex, f64>,
    /// Action chosen at each decision vertex with an empty stack.
    pub strategy: BTreeMap<Vertex, ActionId>,
    pub bound: usize,
    solver: Solver,
    owners: HashMap<BoxId, ComponentId>,
    targets: HashMap<BoxId, ComponentId>,
}

impl TruncatedSolution {
    pub fn value_at(&self, v: Vertex) -> f64 {
        self.values.get(&v).copied().unwrap_or(f64::NAN)
    }

    /// Frames solved so far.
    pub fn frames(&self) -> usize {
        self.solver.memo.len()
    }

    /// Value of an arbitrary configuration of height at most the bound.
    pub fn value(&mut self, c: &Configuration) -> Result<f64, OracleError> {
        if c.terminated {
            return Ok(0.0);
        }
        if c.stack.len() + 1 > self.bound {
            return Err(OracleError::BadParameter(format!(
                "stack height {} exceeds the bound {}",
                c.stack.len() + 1,
                self.bound
            )));
        }
        let mut comp = match c.stack.first() {
            Some(b) => *self
                .owners
                .get(b)
                .ok_or_else(|| OracleError::BadParameter(format!("unknown box #{}", b.0)))?,
            None => c.component,
        };
        let mut remaining = self.bound - 1;
        let mut w = vec![0.0; self.solver.locals[comp.index()].exits];
        for &b in &c.stack {
            let frame = self.solver.frame(comp, remaining, &w)?;
            let local = &self.solver.locals[comp.index()];
            let rets: Vec<f64> = local
                .verts
                .iter()
                .enumerate()
                .filter(|(_, v)| matches!(v, Vertex::Return(bb, _) if *bb == b))
                .map(|(i, _)| frame.pieces[i].eval(&w))
                .collect();
            comp = self.targets[&b];
            remaining -= 1;
            w = rets;
        }
        let (owner, i) = *self
            .solver
            .index
            .get(&c.vertex)
            .ok_or_else(|| OracleError::BadParameter("vertex not in model".into()))?;
        if owner != comp {
            return Err(OracleError::BadParameter("vertex does not belong to the top frame".into()));
        }
        let frame = self.solver.frame(comp, remaining, &w)?;
        Ok(frame.pieces[i].eval(&w))
    }
}

/// Optimal values with the stack height bounded by `bound`.
pub fn solve_truncated(m: &Rmdp, bound: usize, tol: f64) -> Result<TruncatedSolution, OracleError> {
    solve_truncated_with(m, TruncatedOptions::new(bound, tol))
}

/// Values of a fixed stackless strategy with the stack height bounded.
pub fn eval_truncated(
    m: &Rmdp,
    sigma: &BTreeMap<Vertex, ActionId>,
    bound: usize,
    tol: f64,
) -> Result<TruncatedSolution, OracleError> {
    let mut opts = TruncatedOptions::new(bound, tol);
    opts.strategy = Some(sigma.clone());
    solve_truncated_with(m, opts)
}

pub fn solve_truncated_with(m: &Rmdp, opts: TruncatedOptions) -> Result<TruncatedSolution, OracleError> {
    require_valid(m)?;
    if opts.bound == 0 {
        return Err(OracleError::BadParameter("stack bound must be at least 1".into()));
    }
    if !(opts.tol > 0.0) || !(opts.grid > 0.0) {
        return Err(OracleError::BadParameter("tolerance and grid must be positive".into()));
    }
    let bound = opts.bound;
    let mut solver = Solver::new(m, opts)?;
    let mut values = BTreeMap::new();
    let mut strategy = BTreeMap::new();
    for c in m.component_ids() {
        let k = solver.locals[c.index()].exits;
        let zeros = vec![0.0; k];
        let frame = solver.frame(c, bound - 1, &zeros)?;
        let local = &solver.locals[c.index()];
        for (i, &v) in local.verts.iter().enumerate() {
            values.insert(v, frame.pieces[i].eval(&zeros));
            if let Some(a) = frame.choice[i] {
                strategy.insert(v, a);
            }
        }
    }
    let mut owners = HashMap::new();
    let mut targets = HashMap::new();
    for c in m.component_ids() {
        for &(b, t) in &m.component(c).boxes {
            owners.insert(b, c);
            targets.insert(b, t);
        }
    }
    Ok(TruncatedSolution {
        values,
        strategy,
        bound,
        solver,
        owners,
        targets,
    })
}
