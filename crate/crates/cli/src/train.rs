use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::Serialize;

use rmdp::learn::{flat_q_train, percentiles, rql1_train, rql_train, Hyperparameters, LearnError, TrainResult};
use rmdp::Rmdp;

use crate::config::{Algorithm, RunConfig};
use crate::CliError;

#[derive(Serialize)]
struct SeedReport {
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    episodes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capped_episodes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    table_entries: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    schema: u32,
    model: &'a str,
    algorithm: &'a str,
    total_steps: u64,
    seeds: Vec<SeedReport>,
    final_mean: Option<f64>,
    final_p10: Option<f64>,
    final_p90: Option<f64>,
}

fn train_one(m: &Rmdp, alg: Algorithm, h: &Hyperparameters) -> Result<TrainResult, LearnError> {
    match alg {
        Algorithm::Rql => rql_train(m, h),
        Algorithm::Rql1 => rql1_train(m, h),
        Algorithm::FlatQ => flat_q_train(m, h),
        _ => unreachable!("checked by the caller"),
    }
}

/// Results in seed order. Workers pull seeds from a shared counter.
fn run_seeds(m: &Rmdp, alg: Algorithm, h: &Hyperparameters, seeds: &[u64], threads: usize) -> Vec<Result<TrainResult, LearnError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TrainResult, LearnError>>>> = Mutex::new(seeds.iter().map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..threads.clamp(1, seeds.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let mut h = h.clone();
                h.seed = seeds[i];
                let r = train_one(m, alg, &h);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every seed ran")).collect()
}

/// Per-step order statistics over the runs that reached that step.
pub fn aggregate_csv(curves: &[&rmdp::learn::LearningCurve]) -> String {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for c in curves {
        for p in &c.points {
            by_step.entry(p.step).or_default().push(p.mean);
        }
    }
    let mut out = String::from(
        "# mean over runs; p10 = sorted[floor(0.1 n)], p90 = sorted[ceil(0.9 n) - 1] of the per-run means, no interpolation\n",
    );
    out.push_str("step,mean_return,p10,p90,runs\n");
    for (step, v) in by_step {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let (p10, p90) = percentiles(&v);
        let _ = writeln!(out, "{step},{mean},{p10},{p90},{}", v.len());
    }
    out
}

pub fn cmd_train(cfg: &RunConfig, out_override: Option<&Path>, quiet: bool) -> Result<(), CliError> {
    if !cfg.algorithm.is_learner() {
        return Err(CliError::Usage(format!("`{}` is a solver; use `rmdp solve`", cfg.algorithm.name())));
    }
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("`seeds` must list at least one seed".into()));
    }
    let (loaded, h) = cfg.setup()?;
    let m = &loaded.model;
    if cfg.algorithm == Algorithm::Rql1 && !m.is_single_exit() {
        return Err(CliError::Domain(LearnError::NotSingleExit.to_string()));
    }
    let problems = m.validate();
    if !problems.is_empty() {
        return Err(CliError::Domain(LearnError::ModelInvalid(problems).to_string()));
    }
    let out = cfg.out_dir(out_override);
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let threads = cfg
        .threads
        .unwrap_or_else(|| thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let results = run_seeds(m, cfg.algorithm, &h, &cfg.seeds, threads);

    let mut reports = Vec::new();
    let mut curves = Vec::new();
    let mut failed = 0;
    for (&seed, r) in cfg.seeds.iter().zip(&results) {
        match r {
            Ok(res) => {
                write(&out.join(format!("seed-{seed}.csv")), &res.curve.to_csv())?;
                write(&out.join(format!("seed-{seed}.q.tsv")), &res.q.dump(m))?;
                curves.push(&res.curve);
                let final_mean = res.curve.last().map(|p| p.mean);
                if !quiet {
                    println!("seed {seed}: final mean return {}", final_mean.map_or("n/a".into(), |x| format!("{x:.4}")));
                }
                reports.push(SeedReport {
                    seed,
                    final_mean,
                    episodes: Some(res.episodes),
                    capped_episodes: Some(res.capped_episodes),
                    table_entries: Some(res.q.len()),
                    error: None,
                });
            }
            Err(e) => {
                failed += 1;
                eprintln!("seed {seed}: {e}");
                reports.push(SeedReport {
                    seed,
                    final_mean: None,
                    episodes: None,
                    capped_episodes: None,
                    table_entries: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    write(&out.join("aggregate.csv"), &aggregate_csv(&curves))?;
    let finals: Vec<f64> = reports.iter().filter_map(|r| r.final_mean).collect();
    let (p10, p90) = percentiles(&finals);
    let report = TrainReport {
        schema: 1,
        model: &loaded.name,
        algorithm: cfg.algorithm.name(),
        total_steps: h.total_steps,
        final_mean: (!finals.is_empty()).then(|| finals.iter().sum::<f64>() / finals.len() as f64),
        final_p10: (!finals.is_empty()).then_some(p10),
        final_p90: (!finals.is_empty()).then_some(p90),
        seeds: reports,
    };
    if !quiet {
        if let Some(x) = report.final_mean {
            println!("mean final return over {} runs: {x:.4}", finals.len());
        }
    }
    write(&out.join("report.json"), &serde_json::to_string_pretty(&report).expect("serializable"))?;
    if failed > 0 {
        return Err(CliError::Domain(format!("{failed} of {} seeds failed", cfg.seeds.len())));
    }
    Ok(())
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
