use std::collections::{BTreeMap, HashMap};

use super::linear::{solve, Dense};
use super::{require_valid, OracleError};
use crate::model::{ActionId, Rmdp, Vertex};

/// Per-vertex values together with the stackless strategy that attains them.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueSolution {
    pub values: BTreeMap<Vertex, f64>,
    pub strategy: BTreeMap<Vertex, ActionId>,
    /// `max_q |x(q) - F(x)(q)|`.
    pub residual: f64,
    pub iterations: usize,
}

impl ValueSolution {
    pub fn value(&self, v: Vertex) -> f64 {
        self.values.get(&v).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Exit,
    Call { en: usize, ret: usize },
    Decision { actions: Vec<ActionId>, rows: Vec<(f64, Vec<(usize, f64)>)> },
}

/// Vertices of a 1-exit model in a fixed order with their equations.
struct System {
    verts: Vec<Vertex>,
    kinds: Vec<Kind>,
}

impl System {
    fn new(m: &Rmdp) -> Result<Self, OracleError> {
        if !m.is_single_exit() {
            return Err(OracleError::NotSingleExit);
        }
        let verts = m.all_vertices();
        let idx: HashMap<Vertex, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let at = |v: Vertex| idx.get(&v).copied().ok_or_else(|| OracleError::StrategyIncomplete(m.vertex_label(v)));
        let mut kinds = Vec::with_capacity(verts.len());
        for &q in &verts {
            let kind = match q {
                Vertex::Node(n) if m.is_exit(n) => Kind::Exit,
                Vertex::Call(b, en) => {
                    let target = m.box_target(b).expect("validated");
                    let ex = m.component(target).exits[0];
                    Kind::Call {
                        en: at(Vertex::Node(en))?,
                        ret: at(Vertex::Return(b, ex))?,
                    }
                }
                _ => {
                    let actions = m.enabled_actions(q).to_vec();
                    let mut rows = Vec::with_capacity(actions.len());
                    for &a in &actions {
                        let row = m.row(q, a).expect("enabled");
                        let mut dests: Vec<(usize, f64)> = Vec::with_capacity(row.dests.len());
                        for &(d, p) in &row.dests {
                            dests.push((at(d)?, p));
                        }
                        rows.push((row.reward, dests));
                    }
                    Kind::Decision { actions, rows }
                }
            };
            kinds.push(kind);
        }
        Ok(System { verts, kinds })
    }

    fn action_value(&self, x: &[f64], row: &(f64, Vec<(usize, f64)>)) -> f64 {
        row.0 + row.1.iter().map(|&(j, p)| p * x[j]).sum::<f64>()
    }

    /// `F(x)(i)` and the smallest maximizing action index.
    fn apply(&self, x: &[f64], i: usize, lambda: f64) -> (f64, usize) {
        match &self.kinds[i] {
            Kind::Exit => (0.0, 0),
            Kind::Call { en, ret } => (lambda * x[*en] + lambda * x[*ret], 0),
            Kind::Decision { rows, .. } => {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (k, row) in rows.iter().enumerate() {
                    let v = self.action_value(x, row);
                    if v > best {
                        best = v;
                        arg = k;
                    }
                }
                (best, arg)
            }
        }
    }

    fn residual(&self, x: &[f64], lambda: f64) -> f64 {
        (0..x.len())
            .map(|i| (x[i] - self.apply(x, i, lambda).0).abs())
            .fold(0.0, f64::max)
    }

    /// Solves `x = A_σ x + b_σ`, or with `steps` set `y = A_σ y + 1`.
    fn linear(&self, m: &Rmdp, choice: &[usize], lambda: f64, steps: bool) -> Option<Vec<f64>> {
        let n = self.verts.len();
        let mut a = Dense::identity(n);
        let mut b = vec![0.0; n];
        for (i, kind) in self.kinds.iter().enumerate() {
            match kind {
                Kind::Exit => {}
                Kind::Call { en, ret } => {
                    a.add(i, *en, -lambda);
                    a.add(i, *ret, -lambda);
                    b[i] = if steps { 1.0 } else { 0.0 };
                }
                Kind::Decision { rows, .. } => {
                    let row = &rows[choice[i]];
                    for &(j, p) in &row.1 {
                        a.add(i, j, -p);
                    }
                    b[i] = if steps { 1.0 } else { row.0 };
                }
            }
        }
        let _ = m;
        solve(a, b)
    }

    fn evaluate(&self, m: &Rmdp, choice: &[usize], lambda: f64) -> Result<Vec<f64>, OracleError> {
        let describe = || {
            let mut parts = Vec::new();
            for (i, k) in self.kinds.iter().enumerate() {
                if let Kind::Decision { actions, .. } = k {
                    parts.push(format!(
                        "{}->{}",
                        m.vertex_label(self.verts[i]),
                        m.action_name(actions[choice[i]])
                    ));
                }
            }
            parts.join(" ")
        };
        let steps = self
            .linear(m, choice, lambda, true)
            .ok_or_else(|| OracleError::SingularSystem(describe()))?;
        let proper = self
            .kinds
            .iter()
            .zip(&steps)
            .all(|(k, &y)| matches!(k, Kind::Exit) || y >= 1.0 - 1e-9);
        if !proper {
            return Err(OracleError::SingularSystem(describe()));
        }
        self.linear(m, choice, lambda, false)
            .ok_or_else(|| OracleError::SingularSystem(describe()))
    }

    fn choice_of(&self, m: &Rmdp, sigma: &BTreeMap<Vertex, ActionId>) -> Result<Vec<usize>, OracleError> {
        self.kinds
            .iter()
            .enumerate()
            .map(|(i, k)| match k {
                Kind::Decision { actions, .. } => {
                    let q = self.verts[i];
                    let a = sigma
                        .get(&q)
                        .ok_or_else(|| OracleError::StrategyIncomplete(m.vertex_label(q)))?;
                    actions
                        .iter()
                        .position(|x| x == a)
                        .ok_or_else(|| OracleError::StrategyIncomplete(m.vertex_label(q)))
                }
                _ => Ok(0),
            })
            .collect()
    }

    fn solution(&self, x: Vec<f64>, choice: &[usize], lambda: f64, iterations: usize) -> ValueSolution {
        let residual = self.residual(&x, lambda);
        let mut strategy = BTreeMap::new();
        for (i, k) in self.kinds.iter().enumerate() {
            if let Kind::Decision { actions, .. } = k {
                strategy.insert(self.verts[i], actions[choice[i]]);
            }
        }
        ValueSolution {
            values: self.verts.iter().copied().zip(x).collect(),
            strategy,
            residual,
            iterations,
        }
    }
}

/// Exact expected total reward of the stackless strategy `sigma` from every
/// vertex with an empty stack.
pub fn eval_stackless(m: &Rmdp, sigma: &BTreeMap<Vertex, ActionId>) -> Result<BTreeMap<Vertex, f64>, OracleError> {
    eval_stackless_discounted(m, sigma, 1.0)
}

/// As [`eval_stackless`], with call ports weighted by the box-wise discount.
pub fn eval_stackless_discounted(
    m: &Rmdp,
    sigma: &BTreeMap<Vertex, ActionId>,
    lambda: f64,
) -> Result<BTreeMap<Vertex, f64>, OracleError> {
    require_valid(m)?;
    let sys = System::new(m)?;
    let choice = sys.choice_of(m, sigma)?;
    let x = sys.evaluate(m, &choice, lambda)?;
    Ok(sys.verts.iter().copied().zip(x).collect())
}

/// Expected number of steps to termination under `sigma`, counting a box
/// call and its return as one step each.
pub fn expected_steps(m: &Rmdp, sigma: &BTreeMap<Vertex, ActionId>) -> Result<BTreeMap<Vertex, f64>, OracleError> {
    require_valid(m)?;
    let sys = System::new(m)?;
    let choice = sys.choice_of(m, sigma)?;
    let y = sys
        .linear(m, &choice, 1.0, true)
        .ok_or_else(|| OracleError::SingularSystem("expected steps".into()))?;
    Ok(sys.verts.iter().copied().zip(y).collect())
}

/// `max_q |x(q) - F(x)(q)|` for arbitrary per-vertex values.
pub fn f_residual(m: &Rmdp, values: &BTreeMap<Vertex, f64>, lambda: f64) -> Result<f64, OracleError> {
    let sys = System::new(m)?;
    let x: Vec<f64> = sys
        .verts
        .iter()
        .map(|v| values.get(v).copied().unwrap_or(f64::NAN))
        .collect();
    Ok(sys.residual(&x, lambda))
}

/// Optimal values of a 1-exit model by policy iteration.
pub fn solve_1exit(m: &Rmdp) -> Result<ValueSolution, OracleError> {
    solve_1exit_discounted(m, 1.0)
}

pub fn solve_1exit_discounted(m: &Rmdp, lambda: f64) -> Result<ValueSolution, OracleError> {
    require_valid(m)?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(OracleError::BadParameter(format!("box discount {lambda} outside (0, 1]")));
    }
    let sys = System::new(m)?;
    let mut choice = vec![0usize; sys.verts.len()];
    let mut x = match sys.evaluate(m, &choice, lambda) {
        Ok(x) => x,
        Err(OracleError::SingularSystem(_)) => {
            // Smallest-action strategy is improper; start from the greedy
            // strategy of a value-iteration estimate instead.
            let vi = iterate(&sys, lambda, 1e-12, 1_000_000)?;
            choice = vi.1;
            sys.evaluate(m, &choice, lambda)
                .map_err(|_| OracleError::ImproperModel)?
        }
        Err(e) => return Err(e),
    };
    let mut iterations = 1;
    loop {
        let mut changed = false;
        for (i, kind) in sys.kinds.iter().enumerate() {
            if let Kind::Decision { rows, .. } = kind {
                let current = sys.action_value(&x, &rows[choice[i]]);
                let (best, arg) = sys.apply(&x, i, lambda);
                if best > current + 1e-12 {
                    choice[i] = arg;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        x = sys
            .evaluate(m, &choice, lambda)
            .map_err(|_| OracleError::ImproperModel)?;
        iterations += 1;
        if iterations > 100_000 {
            return Err(OracleError::NotConverged("policy iteration".into()));
        }
    }
    Ok(sys.solution(x, &choice, lambda, iterations))
}

fn iterate(sys: &System, lambda: f64, tol: f64, max_sweeps: usize) -> Result<(Vec<f64>, Vec<usize>, usize), OracleError> {
    let n = sys.verts.len();
    let mut x = vec![0.0; n];
    for sweep in 1..=max_sweeps {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let (v, _) = sys.apply(&x, i, lambda);
            delta = delta.max((v - x[i]).abs());
            x[i] = v;
        }
        if !delta.is_finite() {
            return Err(OracleError::NotConverged("values diverged".into()));
        }
        if delta < tol {
            let choice = (0..n).map(|i| sys.apply(&x, i, lambda).1).collect();
            return Ok((x, choice, sweep));
        }
    }
    Err(OracleError::NotConverged(format!("no convergence after {max_sweeps} sweeps")))
}

/// Gauss-Seidel iteration of `F` from zero until the sup-norm change drops
/// below `tol`. Works on models too large for dense solves and on models
/// with improper strategies of infinitely negative value.
pub fn value_iterate_1exit(m: &Rmdp, lambda: f64, tol: f64, max_sweeps: usize) -> Result<ValueSolution, OracleError> {
    require_valid(m)?;
    let sys = System::new(m)?;
    let (x, choice, sweeps) = iterate(&sys, lambda, tol, max_sweeps)?;
    Ok(sys.solution(x, &choice, lambda, sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RmdpBuilder, VRef};

    pub(crate) fn self_call(p: f64) -> Rmdp {
        let mut b = RmdpBuilder::new();
        b.entry("S", "en").exit("S", "ex").add_box("S", "k", "S");
        b.transition(
            "S",
            VRef::node("en"),
            "a",
            &[(VRef::port("k", "en"), p), (VRef::node("ex"), 1.0 - p)],
            -1.0,
        );
        b.edge("S", VRef::port("k", "ex"), "a", VRef::node("ex"), 0.0);
        b.build_validated().unwrap()
    }

    fn first_actions(m: &Rmdp) -> BTreeMap<Vertex, ActionId> {
        m.all_vertices()
            .into_iter()
            .filter_map(|v| m.enabled_actions(v).first().map(|&a| (v, a)))
            .collect()
    }

    #[test]
    fn chain_of_two() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "start").exit("C", "exit");
        b.edge("C", VRef::node("start"), "a", VRef::node("exit"), 3.0);
        let m = b.build_validated().unwrap();
        let x = eval_stackless(&m, &first_actions(&m)).unwrap();
        assert_eq!(x[&m.vertex_by_label("start").unwrap()], 3.0);
        assert_eq!(x[&m.vertex_by_label("exit").unwrap()], 0.0);
    }

    #[test]
    fn self_call_geometric_value() {
        let m = self_call(0.4);
        let x = eval_stackless(&m, &first_actions(&m)).unwrap();
        let en = m.vertex_by_label("en").unwrap();
        assert!((x[&en] + 1.0 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn supercritical_recursion_is_improper() {
        // Two sequential calls with probability 0.6: mean offspring 1.2.
        let mut b = RmdpBuilder::new();
        b.entry("S", "en").exit("S", "ex").add_box("S", "k1", "S").add_box("S", "k2", "S");
        b.transition("S", VRef::node("en"), "a", &[(VRef::port("k1", "en"), 0.6), (VRef::node("ex"), 0.4)], -1.0);
        b.edge("S", VRef::port("k1", "ex"), "a", VRef::port("k2", "en"), 0.0);
        b.edge("S", VRef::port("k2", "ex"), "a", VRef::node("ex"), 0.0);
        let m = b.build_validated().unwrap();
        assert!(matches!(eval_stackless(&m, &first_actions(&m)), Err(OracleError::SingularSystem(_))));
    }

    #[test]
    fn self_loop_is_singular() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex").node("C", "x");
        b.edge("C", VRef::node("en"), "a", VRef::node("x"), 0.0);
        b.edge("C", VRef::node("x"), "loop", VRef::node("x"), -1.0);
        b.edge("C", VRef::node("x"), "out", VRef::node("ex"), -5.0);
        let m = b.build_validated().unwrap();
        let x = m.vertex_by_label("x").unwrap();
        let mut sigma = first_actions(&m);
        sigma.insert(x, m.action_by_name("loop").unwrap());
        assert!(matches!(eval_stackless(&m, &sigma), Err(OracleError::SingularSystem(_))));
        // Policy iteration recovers from the improper starting strategy.
        let sol = solve_1exit(&m).unwrap();
        assert_eq!(sol.strategy[&x], m.action_by_name("out").unwrap());
        assert!((sol.value(m.vertex_by_label("en").unwrap()) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn solve_picks_better_action_and_matches_value_iteration() {
        let mut b = RmdpBuilder::new();
        b.entry("S", "en").exit("S", "ex").add_box("S", "k", "S");
        b.transition("S", VRef::node("en"), "risky", &[(VRef::port("k", "en"), 0.4), (VRef::node("ex"), 0.6)], -1.0);
        b.edge("S", VRef::node("en"), "safe", VRef::node("ex"), -2.0);
        b.edge("S", VRef::port("k", "ex"), "a", VRef::node("ex"), 0.0);
        let m = b.build_validated().unwrap();
        let sol = solve_1exit(&m).unwrap();
        let en = m.vertex_by_label("en").unwrap();
        assert_eq!(sol.strategy[&en], m.action_by_name("risky").unwrap());
        assert!(sol.residual <= 1e-9);
        let vi = value_iterate_1exit(&m, 1.0, 1e-13, 100_000).unwrap();
        assert!((vi.value(en) - sol.value(en)).abs() < 1e-9);
        let back = eval_stackless(&m, &sol.strategy).unwrap();
        assert!((back[&en] - sol.value(en)).abs() < 1e-12);
    }

    #[test]
    fn multi_exit_rejected() {
        let m = crate::envs::cloud_rmdp();
        assert_eq!(solve_1exit(&m), Err(OracleError::NotSingleExit));
    }
}
