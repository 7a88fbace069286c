use std::collections::{BTreeMap, HashMap, HashSet};

use super::{require_valid, OracleError};
use crate::model::{BoxId, ComponentId, NodeId, Rmdp, Vertex};

/// Maximum total reward from each `(component, entry)` with an empty stack.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicSolution {
    pub values: BTreeMap<(ComponentId, NodeId), f64>,
    pub depth_cap: usize,
    /// Distinct `(stack, vertex)` configurations explored at `depth_cap`.
    pub configurations: usize,
}

impl DeterministicSolution {
    pub fn value(&self, c: ComponentId, entry: NodeId) -> Option<f64> {
        self.values.get(&(c, entry)).copied()
    }
}

type Key = (Vec<BoxId>, Vertex);

struct Frame {
    key: Key,
    best: f64,
    succs: Vec<(f64, Key)>,
    next: usize,
}

struct Search<'m> {
    m: &'m Rmdp,
    cap: usize,
    memo: HashMap<Key, f64>,
    path: HashSet<Key>,
}

impl Search<'_> {
    /// Starting value and successors of a configuration. Runs of the chain
    /// family are exponentially long, so the search keeps its own stack.
    fn expand(&self, key: Key) -> Result<Frame, OracleError> {
        let (stack, q) = &key;
        let mut best = f64::NEG_INFINITY;
        let mut succs = Vec::new();
        match *q {
            Vertex::Node(n) if self.m.is_exit(n) => match stack.split_last() {
                None => best = 0.0,
                Some((&b, rest)) => succs.push((0.0, (rest.to_vec(), Vertex::Return(b, n)))),
            },
            // Height after the push would be stack.len() + 2.
            Vertex::Call(_, _) if stack.len() + 2 > self.cap => best = 0.0,
            Vertex::Call(b, en) => {
                let mut s = stack.clone();
                s.push(b);
                succs.push((0.0, (s, Vertex::Node(en))));
            }
            _ => {
                for &a in self.m.enabled_actions(*q) {
                    let row = self.m.row(*q, a).expect("enabled");
                    let dest = row.dests.iter().find(|(_, p)| *p > 0.0).map(|&(d, _)| d);
                    let dest = dest.ok_or_else(|| OracleError::NondeterministicModel(self.m.vertex_label(*q)))?;
                    succs.push((row.reward, (stack.clone(), dest)));
                }
            }
        }
        Ok(Frame { key, best, succs, next: 0 })
    }

    fn value(&mut self, root: Key) -> Result<f64, OracleError> {
        if let Some(&v) = self.memo.get(&root) {
            return Ok(v);
        }
        self.path.insert(root.clone());
        let mut work = vec![self.expand(root)?];
        loop {
            let top = work.last_mut().expect("non-empty");
            if top.next < top.succs.len() {
                let (r, k) = &top.succs[top.next];
                if let Some(&v) = self.memo.get(k) {
                    top.best = top.best.max(r + v);
                    top.next += 1;
                    continue;
                }
                if !self.path.insert(k.clone()) {
                    return Err(OracleError::Improper(self.m.vertex_label(k.1)));
                }
                let k = k.clone();
                work.push(self.expand(k)?);
                continue;
            }
            let done = work.pop().expect("non-empty");
            self.path.remove(&done.key);
            self.memo.insert(done.key, done.best);
            match work.last_mut() {
                None => return Ok(done.best),
                Some(parent) => {
                    parent.best = parent.best.max(parent.succs[parent.next].0 + done.best);
                    parent.next += 1;
                }
            }
        }
    }
}

fn search(m: &Rmdp, cap: usize) -> Result<(BTreeMap<(ComponentId, NodeId), f64>, usize), OracleError> {
    let mut s = Search {
        m,
        cap,
        memo: HashMap::new(),
        path: HashSet::new(),
    };
    let mut values = BTreeMap::new();
    for c in m.component_ids() {
        for &en in &m.component(c).entries {
            let v = s.value((Vec::new(), Vertex::Node(en)))?;
            values.insert((c, en), v);
        }
    }
    Ok((values, s.memo.len()))
}

/// Exhaustive search over action choices on configurations of a model whose
/// rows are all point masses. Calls that would push the stack height past
/// `depth_cap` are valued 0. The search is repeated at twice the cap and
/// fails with [`OracleError::CapUnstable`] if any value moves.
pub fn solve_deterministic(m: &Rmdp, depth_cap: usize) -> Result<DeterministicSolution, OracleError> {
    require_valid(m)?;
    if depth_cap == 0 {
        return Err(OracleError::BadParameter("depth cap must be at least 1".into()));
    }
    for c in m.components() {
        for (&(v, _), row) in &c.transitions {
            if row.dests.iter().filter(|(_, p)| *p > 0.0).count() != 1 {
                return Err(OracleError::NondeterministicModel(m.vertex_label(v)));
            }
        }
    }
    let (values, configurations) = search(m, depth_cap)?;
    let (doubled, _) = search(m, depth_cap * 2)?;
    for (k, &v) in &values {
        let d = doubled[k];
        if (v - d).abs() > 1e-12 * (1.0 + v.abs()) {
            return Err(OracleError::CapUnstable {
                at_cap: v,
                at_double: d,
            });
        }
    }
    Ok(DeterministicSolution {
        values,
        depth_cap,
        configurations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RmdpBuilder, VRef};

    #[test]
    fn two_exit_choice() {
        let mut b = RmdpBuilder::new();
        b.entry("M", "s").exit("M", "t").add_box("M", "k", "C");
        b.entry("C", "ce").exit("C", "lo").exit("C", "hi");
        b.edge("M", VRef::node("s"), "go", VRef::port("k", "ce"), 0.0);
        b.edge("M", VRef::port("k", "lo"), "go", VRef::node("t"), 1.0);
        b.edge("M", VRef::port("k", "hi"), "go", VRef::node("t"), 10.0);
        b.edge("C", VRef::node("ce"), "l", VRef::node("lo"), 0.0);
        b.edge("C", VRef::node("ce"), "h", VRef::node("hi"), -3.0);
        let m = b.build_validated().unwrap();
        let sol = solve_deterministic(&m, 4).unwrap();
        let s = m.node_by_name("s").unwrap();
        assert_eq!(sol.value(ComponentId(0), s), Some(7.0));
        let ce = m.node_by_name("ce").unwrap();
        assert_eq!(sol.value(ComponentId(1), ce), Some(0.0));
    }

    #[test]
    fn unbounded_recursion_is_cap_unstable() {
        let mut b = RmdpBuilder::new();
        b.entry("R", "en").exit("R", "ex").add_box("R", "k", "R");
        b.edge("R", VRef::node("en"), "go", VRef::port("k", "en"), -1.0);
        b.edge("R", VRef::port("k", "ex"), "go", VRef::node("ex"), 0.0);
        let m = b.build_validated().unwrap();
        assert!(matches!(solve_deterministic(&m, 5), Err(OracleError::CapUnstable { .. })));
    }

    #[test]
    fn stochastic_row_rejected() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex");
        b.transition("C", VRef::node("en"), "a", &[(VRef::node("x"), 0.5), (VRef::node("ex"), 0.5)], 0.0);
        b.edge("C", VRef::node("x"), "a", VRef::node("ex"), 0.0);
        let m = b.build_validated().unwrap();
        assert!(matches!(solve_deterministic(&m, 3), Err(OracleError::NondeterministicModel(_))));
    }

    #[test]
    fn loop_is_improper() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex");
        b.edge("C", VRef::node("en"), "a", VRef::node("x"), 0.0);
        b.edge("C", VRef::node("x"), "a", VRef::node("x"), -1.0);
        b.edge("C", VRef::node("x"), "b", VRef::node("ex"), 0.0);
        let m = b.build_validated().unwrap();
        assert!(matches!(solve_deterministic(&m, 3), Err(OracleError::Improper(_))));
    }
}
