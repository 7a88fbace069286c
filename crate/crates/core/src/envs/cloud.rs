use super::EnvSpec;
use crate::learn::{Exploration, Hyperparameters, LearningRate};
use crate::model::{ComponentId, Rmdp, RmdpBuilder, VRef};

/// The task/server/interrupt example with components `T`, `S` and `H`.
///
/// Decision points: `u1` (`m` or `d`), `u3` (`f` or `r`) and `u5` (`n` or
/// `y`). Every other vertex has the single action `x`.
pub fn cloud_rmdp() -> Rmdp {
    let n = VRef::node;
    let p = VRef::port;
    let mut b = RmdpBuilder::new();
    b.entry("T", "u1").exit("T", "u2");
    b.add_box("T", "b1", "S").add_box("T", "b2", "S").add_box("T", "b3", "S");
    b.entry("S", "u3").exit("S", "u4");
    b.add_box("S", "b4", "H").add_box("S", "b5", "S");
    b.entry("H", "u5").exit("H", "u6").exit("H", "u7");
    b.add_box("H", "b6", "H").add_box("H", "b7", "H");

    b.edge("T", n("u1"), "m", n("u2"), -8.0);
    b.edge("T", n("u1"), "d", p("b1", "u3"), -0.5);
    b.edge("T", p("b1", "u4"), "x", p("b2", "u3"), 0.0);
    b.edge("T", p("b2", "u4"), "x", p("b3", "u3"), 0.0);
    b.edge("T", p("b3", "u4"), "c", n("u2"), -0.5);

    b.transition("S", n("u3"), "f", &[(p("b5", "u3"), 0.4), (n("u4"), 0.6)], -1.0);
    b.transition("S", n("u3"), "r", &[(p("b4", "u5"), 0.3), (n("u4"), 0.7)], -1.5);
    b.edge("S", p("b4", "u6"), "x", n("u4"), 0.2);
    b.edge("S", p("b4", "u7"), "x", n("u4"), 0.2);
    b.edge("S", p("b5", "u4"), "x", n("u4"), 0.0);

    b.transition("H", n("u5"), "n", &[(p("b6", "u5"), 0.3), (n("u6"), 0.7)], -0.01);
    b.edge("H", n("u5"), "y", n("u7"), -0.2);
    b.edge("H", p("b6", "u6"), "x", p("b7", "u5"), 0.0);
    b.edge("H", p("b6", "u7"), "x", n("u7"), 0.0);
    b.edge("H", p("b7", "u6"), "x", n("u6"), 0.0);
    b.edge("H", p("b7", "u7"), "x", n("u7"), 0.0);
    b.build_validated().expect("cloud model is well formed")
}

pub fn cloud_spec() -> EnvSpec {
    let model = cloud_rmdp();
    let start = (ComponentId(0), model.node_by_name("u1").expect("u1"));
    let mut h = Hyperparameters::new(start);
    h.learning_rate = LearningRate::Constant(0.02);
    h.exploration = Exploration::constant(0.1);
    h.quantization = 0.001;
    h.total_steps = 200_000;
    h.eval_episodes = 100;
    EnvSpec {
        name: "cloud".into(),
        model,
        start,
        hyperparameters: h,
        params: serde_json::json!({}),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vertex;

    #[test]
    fn structure() {
        let m = cloud_rmdp();
        assert!(m.validate().is_empty());
        assert_eq!(m.components().len(), 3);
        assert_eq!(m.box_names().len(), 7);
        assert_eq!(m.diameter(), 8.0);
        assert!(!m.is_single_exit());
        let decisions: Vec<_> = m
            .all_vertices()
            .into_iter()
            .filter(|&v| m.enabled_actions(v).len() > 1)
            .map(|v| m.vertex_label(v))
            .collect();
        assert_eq!(decisions, ["u1", "u3", "u5"]);
        assert!(matches!(m.vertex_by_label("b4:u7"), Some(Vertex::Return(..))));
    }
}
