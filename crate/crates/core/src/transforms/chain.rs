use crate::model::{Rmdp, RmdpBuilder, VRef};

/// `M1 … Mn` where `Mi` on `a` calls `M(i-1)` twice and then exits with
/// reward 1, and `M1` on `a` exits with reward 1. Action `b` anywhere leads
/// to the sink exit `z<i>` with reward 0; a callee that sank makes its
/// caller sink too. The start is entry `e<n>` of `Mn`, worth `2^n - 1`.
///
/// `M1` has no boxes.
pub fn hierarchical_chain(n: usize) -> Rmdp {
    build(n, true)
}

/// The same family without sinks or `b`, so every component has one exit.
pub fn hierarchical_chain_1exit(n: usize) -> Rmdp {
    build(n, false)
}

fn build(n: usize, sinks: bool) -> Rmdp {
    assert!(n >= 1, "chain length must be at least 1");
    let node = |s: &str| VRef::node(s);
    let port = |b: &str, s: &str| VRef::port(b, s);
    let mut b = RmdpBuilder::new();
    for i in 1..=n {
        let m = format!("M{i}");
        let (e, x, z) = (format!("e{i}"), format!("x{i}"), format!("z{i}"));
        b.entry(&m, &e).exit(&m, &x).action(&m, "a");
        if sinks {
            b.exit(&m, &z);
            b.edge(&m, node(&e), "b", node(&z), 0.0);
        }
        if i == 1 {
            b.edge(&m, node(&e), "a", node(&x), 1.0);
            continue;
        }
        let callee = format!("M{}", i - 1);
        let (ce, cx, cz) = (format!("e{}", i - 1), format!("x{}", i - 1), format!("z{}", i - 1));
        let (k1, k2) = (format!("k{i}a"), format!("k{i}b"));
        b.add_box(&m, &k1, &callee).add_box(&m, &k2, &callee);
        b.edge(&m, node(&e), "a", port(&k1, &ce), 0.0);
        b.edge(&m, port(&k1, &cx), "a", port(&k2, &ce), 0.0);
        b.edge(&m, port(&k2, &cx), "a", node(&x), 1.0);
        if sinks {
            b.edge(&m, port(&k1, &cx), "b", node(&z), 0.0);
            b.edge(&m, port(&k2, &cx), "b", node(&z), 0.0);
            b.edge(&m, port(&k1, &cz), "a", node(&z), 0.0);
            b.edge(&m, port(&k2, &cz), "a", node(&z), 0.0);
        }
    }
    b.build_validated().expect("chain is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComponentId;
    use crate::oracle::{solve_1exit, solve_deterministic};

    #[test]
    fn chain_values() {
        for n in 1..=6usize {
            let m = hierarchical_chain(n);
            assert!(m.validate().is_empty());
            let sol = solve_deterministic(&m, n + 1).unwrap();
            let c = ComponentId((n - 1) as u32);
            let en = m.node_by_name(&format!("e{n}")).unwrap();
            assert_eq!(sol.value(c, en), Some(((1u64 << n) - 1) as f64));
        }
    }

    #[test]
    fn one_exit_form_agrees() {
        let m = hierarchical_chain_1exit(4);
        assert!(m.is_single_exit());
        let sol = solve_1exit(&m).unwrap();
        assert_eq!(sol.value(m.vertex_by_label("e4").unwrap()), 15.0);
    }

    #[test]
    fn wrong_first_action_is_worth_nothing() {
        let m = hierarchical_chain(3);
        let e3 = m.node_by_name("e3").unwrap();
        let z3 = m.vertex_by_label("z3").unwrap();
        let b = m.action_by_name("b").unwrap();
        assert_eq!(m.row(crate::model::Vertex::Node(e3), b).unwrap().dests, vec![(z3, 1.0)]);
    }
}
