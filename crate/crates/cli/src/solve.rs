use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use rmdp::oracle::{pac_learn_1exit, solve_1exit, solve_deterministic, solve_truncated, ModelSampler, OracleError};
use rmdp::{ActionId, Rmdp, Vertex};

use crate::config::{Algorithm, RunConfig};
use crate::train::write;
use crate::CliError;

fn labelled(m: &Rmdp, values: &BTreeMap<Vertex, f64>) -> Value {
    values.iter().map(|(&v, &x)| (m.vertex_label(v), json!(x))).collect::<Map<_, _>>().into()
}

fn strategy(m: &Rmdp, s: &BTreeMap<Vertex, ActionId>) -> Value {
    s.iter()
        .filter(|(&v, _)| m.enabled_actions(v).len() > 1)
        .map(|(&v, &a)| (m.vertex_label(v), json!(m.action_name(a))))
        .collect::<Map<_, _>>()
        .into()
}

fn domain(e: OracleError) -> CliError {
    CliError::Domain(e.to_string())
}

pub fn cmd_solve(cfg: &RunConfig, out_override: Option<&Path>, quiet: bool) -> Result<(), CliError> {
    if cfg.algorithm.is_learner() {
        return Err(CliError::Usage(format!("`{}` is a learner; use `rmdp train`", cfg.algorithm.name())));
    }
    let (loaded, _) = cfg.setup()?;
    let m = &loaded.model;
    let (sc, se) = loaded.start;
    let start = Vertex::Node(se);
    let mut report = Map::new();
    report.insert("schema".into(), json!(1));
    report.insert("model".into(), json!(loaded.name));
    report.insert("algorithm".into(), json!(cfg.algorithm.name()));
    report.insert(
        "start".into(),
        json!({ "component": m.component(sc).name, "entry": m.node_name(se) }),
    );
    let start_value = match cfg.algorithm {
        Algorithm::Solve1exit => {
            let sol = solve_1exit(m).map_err(domain)?;
            report.insert("residual".into(), json!(sol.residual));
            report.insert("iterations".into(), json!(sol.iterations));
            report.insert("values".into(), labelled(m, &sol.values));
            report.insert("strategy".into(), strategy(m, &sol.strategy));
            sol.value(start)
        }
        Algorithm::SolveTruncated => {
            let sol = solve_truncated(m, cfg.solve.bound, cfg.solve.tol).map_err(domain)?;
            report.insert("bound".into(), json!(sol.bound));
            report.insert("frames".into(), json!(sol.frames()));
            report.insert("values".into(), labelled(m, &sol.values));
            report.insert("strategy".into(), strategy(m, &sol.strategy));
            sol.value_at(start)
        }
        Algorithm::SolveDeterministic => {
            let cap = cfg.solve.depth_cap.unwrap_or(m.components().len() + 1);
            let sol = solve_deterministic(m, cap).map_err(domain)?;
            report.insert("depth_cap".into(), json!(sol.depth_cap));
            report.insert("configurations".into(), json!(sol.configurations));
            let entries: Map<String, Value> = sol.values.iter().map(|(&(_, en), &x)| (m.node_name(en).to_string(), json!(x))).collect();
            report.insert("values".into(), entries.into());
            sol.value(sc, se).unwrap_or(f64::NAN)
        }
        Algorithm::Pac1exit => {
            let p = cfg
                .pac
                .as_ref()
                .ok_or_else(|| CliError::Usage("pac-1exit needs a [pac] table with eps, delta and k".into()))?;
            let r_max = p.r_max.unwrap_or_else(|| m.diameter());
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let mut sampler = ModelSampler {
                model: m,
                rng: ChaCha8Rng::seed_from_u64(seed),
            };
            let r = pac_learn_1exit(&mut sampler, m, p.eps, p.delta, p.k, r_max).map_err(domain)?;
            report.insert("seed".into(), json!(seed));
            report.insert("samples_per_row".into(), json!(r.n));
            report.insert("eps_prime".into(), json!(r.eps_prime));
            report.insert("values".into(), labelled(m, &r.values));
            report.insert("strategy".into(), strategy(m, &r.solution.strategy));
            r.values.get(&start).copied().unwrap_or(f64::NAN)
        }
        _ => unreachable!("learners rejected above"),
    };
    report.insert("start_value".into(), json!(start_value));
    let out = cfg.out_dir(out_override);
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write(&out.join("solve.json"), &serde_json::to_string_pretty(&Value::Object(report)).expect("serializable"))?;
    if !quiet {
        println!("{}: value at {} = {start_value}", cfg.algorithm.name(), m.node_name(se));
    }
    Ok(())
}
