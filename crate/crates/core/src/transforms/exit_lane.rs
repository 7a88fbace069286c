use std::collections::HashSet;

use super::TransformError;
use crate::model::{ActionId, NodeId, Rmdp, Row, Vertex};

fn fresh(taken: &HashSet<String>, base: &str) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (1..).map(|i| format!("{base}_{i}")).find(|s| !taken.contains(s)).expect("unbounded")
}

/// Step-wise discounting as stopping: each component gets a fresh exit
/// `<component>_lane`, every row where the agent acts keeps `lambda` of its
/// mass and sends the rest to that exit, and each box's new return port
/// leads straight on to the caller's lane exit with reward 0. The lane
/// return ports use a fresh action `lane`.
pub fn add_exit_lane(m: &Rmdp, lambda: f64) -> Result<Rmdp, TransformError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(TransformError::BadParameter(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let mut node_names = m.node_names().to_vec();
    let mut action_names = m.action_names().to_vec();
    let mut taken: HashSet<String> = node_names.iter().cloned().collect();
    let lane_action = ActionId(action_names.len() as u32);
    action_names.push(fresh(&action_names.iter().cloned().collect(), "lane"));

    let mut lanes = Vec::new();
    for c in m.components() {
        let name = fresh(&taken, &format!("{}_lane", c.name));
        taken.insert(name.clone());
        lanes.push(NodeId(node_names.len() as u32));
        node_names.push(name);
    }

    let mut components = m.components().to_vec();
    for (i, comp) in components.iter_mut().enumerate() {
        let lane = lanes[i];
        for row in comp.transitions.values_mut() {
            for d in &mut row.dests {
                d.1 *= lambda;
            }
            row.dests.push((Vertex::Node(lane), 1.0 - lambda));
        }
        for &(b, target) in &comp.boxes {
            comp.transitions
                .insert((Vertex::Return(b, lanes[target.index()]), lane_action), Row::deterministic(Vertex::Node(lane), 0.0));
        }
        if !comp.boxes.is_empty() {
            comp.actions.insert(lane_action);
        }
        comp.nodes.push(lane);
        comp.exits.push(lane);
    }
    Ok(Rmdp::from_parts(components, node_names, m.box_names().to_vec(), action_names))
}
