use std::collections::BTreeMap;

use rmdp::envs::*;
use rmdp::oracle::eval_truncated;
use rmdp::text::{parse, serialize};
use rmdp::{ActionId, Rmdp, Vertex};

fn specs() -> Vec<EnvSpec> {
    vec![cloud_spec(), palindrome_spec(), spelunking_spec()]
}

#[test]
fn bundled_models_validate_and_round_trip() {
    for s in specs() {
        assert!(s.model.validate().is_empty(), "{}: {:?}", s.name, s.model.validate());
        let text = serialize(&s.model);
        assert!(parse(&text).unwrap() == s.model, "{}", s.name);
        assert!(s.model.component(s.start.0).entries.contains(&s.start.1));
        assert_eq!(s.hyperparameters.start, s.start);
    }
}

#[test]
fn spec_json_names_the_start() {
    for s in specs() {
        let j: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(j["schema"], 1);
        assert_eq!(j["name"], s.name.as_str());
        assert_eq!(j["start_entry"], s.model.node_name(s.start.1));
        assert!(j["hyperparameters"]["total_steps"].as_u64().unwrap() > 0);
    }
}

/// Every stackless strategy of the cloud model, evaluated with a deep
/// stack bound.
#[test]
fn cloud_brute_force() {
    let m = cloud_rmdp();
    let act = |n: &str| m.action_by_name(n).unwrap();
    let at = |l: &str| m.vertex_by_label(l).unwrap();
    let base: BTreeMap<Vertex, ActionId> = m
        .all_vertices()
        .into_iter()
        .filter(|&v| m.enabled_actions(v).len() == 1)
        .map(|v| (v, m.enabled_actions(v)[0]))
        .collect();
    let mut results = Vec::new();
    for a1 in ["m", "d"] {
        for a3 in ["f", "r"] {
            for a5 in ["n", "y"] {
                let mut sigma = base.clone();
                sigma.insert(at("u1"), act(a1));
                sigma.insert(at("u3"), act(a3));
                sigma.insert(at("u5"), act(a5));
                let v = eval_truncated(&m, &sigma, 30, 1e-12).unwrap().value_at(at("u1"));
                results.push((v, format!("{a1}{a3}{a5}")));
            }
        }
    }
    results.sort_by(|a, b| b.0.total_cmp(&a.0));
    assert_eq!(results[0].1, "drn", "{results:?}");
    let h = -0.01 / 0.4;
    let by_hand = -0.5 + 3.0 * (-1.5 + 0.3 * (h + 0.2)) - 0.5;
    assert!((results[0].0 - by_hand).abs() < 1e-6, "{} vs {by_hand}", results[0].0);
    // Moving straight on costs exactly its reward.
    assert!(results.iter().filter(|r| r.1.starts_with('m')).all(|r| r.0 == -8.0));
}

#[test]
fn palindrome_product_shape() {
    let p = palindrome_product();
    let m: &Rmdp = &p.model;
    assert!(m.validate().is_empty());
    assert_eq!(palindrome_env(), p.model);
    assert!(m.components().len() >= 2);
    assert_eq!(palindrome_grid().components().len(), 1);
}

#[test]
fn spelunking_parameters() {
    let s = spelunking();
    assert!(s.model.validate().is_empty());
    assert!(spelunking_rmdp(0.05, 0.5).unwrap().validate().is_empty());
    assert!(spelunking_rmdp(1.5, 0.5).is_err());
}
