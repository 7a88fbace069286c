use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::greedy::{evaluate, eval_rng};
use super::table::{quantize_key, Keying, QTable, VKey};
use super::{get_exits, Hyperparameters, LearnError};
use crate::model::{Rmdp, Vertex};
use crate::semantics::{decision_step, initial_config, Configuration, Event};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean_return,p10,p90\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.step, p.mean, p.p10, p.p90));
        }
        out
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub q: QTable,
    pub curve: LearningCurve,
    pub episodes: u64,
    /// Training episodes that hit the step cap.
    pub capped_episodes: u64,
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    Recursive,
    SingleExit,
    Flat,
}

/// Multi-exit Recursive Q-learning: Q-values keyed on the normalized,
/// quantized exit-value vector of the current context.
pub fn rql_train(m: &Rmdp, h: &Hyperparameters) -> Result<TrainResult, LearnError> {
    run(m, h, Variant::Recursive, None)
}

/// The 1-exit learner with box-wise discount `h.box_discount`.
pub fn rql1_train(m: &Rmdp, h: &Hyperparameters) -> Result<TrainResult, LearnError> {
    if !m.is_single_exit() {
        return Err(LearnError::NotSingleExit);
    }
    run(m, h, Variant::SingleExit, None)
}

/// Plain Q-learning over vertices; calls and returns look like ordinary moves.
pub fn flat_q_train(m: &Rmdp, h: &Hyperparameters) -> Result<TrainResult, LearnError> {
    run(m, h, Variant::Flat, None)
}

/// Runs a learner and hands every intermediate table to `probe`; used by
/// tests that compare learners step by step.
#[doc(hidden)]
pub fn train_with_probe(
    m: &Rmdp,
    h: &Hyperparameters,
    single_exit: bool,
    probe: &mut dyn FnMut(u64, &QTable),
) -> Result<TrainResult, LearnError> {
    if single_exit {
        if !m.is_single_exit() {
            return Err(LearnError::NotSingleExit);
        }
        run(m, h, Variant::SingleExit, Some(probe))
    } else {
        run(m, h, Variant::Recursive, Some(probe))
    }
}

fn starts(m: &Rmdp) -> Vec<Configuration> {
    m.component_ids()
        .flat_map(|c| {
            m.component(c)
                .entries
                .iter()
                .filter_map(move |&en| initial_config(m, c, en).ok())
                .collect::<Vec<_>>()
        })
        .collect()
}

fn run(
    m: &Rmdp,
    h: &Hyperparameters,
    variant: Variant,
    mut probe: Option<&mut dyn FnMut(u64, &QTable)>,
) -> Result<TrainResult, LearnError> {
    h.check()?;
    let diagnostics = m.validate();
    if !diagnostics.is_empty() {
        return Err(LearnError::ModelInvalid(diagnostics));
    }
    let start = initial_config(m, h.start.0, h.start.1)?;
    let all_starts = starts(m);
    let keying = if variant == Variant::Recursive {
        Keying::ExitValues
    } else {
        Keying::VertexOnly
    };
    let mut q = QTable::new(keying, h.quantization, h.initial_q);
    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    let mut erng = eval_rng(h.seed);
    let every = h.eval_interval();
    let lambda = h.box_discount;

    let mut curve = LearningCurve::default();
    let mut steps = 0u64;
    let mut episodes = 0u64;
    let mut capped = 0u64;
    while steps < h.total_steps {
        episodes += 1;
        let mut c = if h.exploring_starts {
            all_starts[rng.gen_range(0..all_starts.len())].clone()
        } else {
            start.clone()
        };
        let root_exits = m.component(c.component).exits.len();
        let mut v: VKey = match keying {
            Keying::ExitValues => vec![0; root_exits],
            Keying::VertexOnly => Vec::new(),
        };
        let mut stack: Vec<VKey> = Vec::new();
        let mut raw = 0usize;
        while !c.terminated && steps < h.total_steps {
            if raw >= h.step_cap {
                capped += 1;
                break;
            }
            let s = c.vertex;
            let eps = h.exploration.at(steps);
            let (i, a) = choose(m, &q, s, &v, eps, &mut rng);
            let out = decision_step(m, &c, a, &mut rng)?;
            raw += out.raw_steps;
            let r = out.reward;
            let next = out.next.vertex;
            let target;
            let mut pending_v: Option<VKey> = None;
            match (variant, out.event) {
                (Variant::Recursive, Event::EnteredBox(b)) => {
                    let exits = get_exits(m, b)?;
                    let raw_v: Vec<f64> = exits.iter().map(|&x| q.max(x, &v)).collect();
                    let vmin = raw_v.iter().copied().fold(f64::INFINITY, f64::min);
                    let shifted: Vec<f64> = raw_v.iter().map(|x| x - vmin).collect();
                    let vp = quantize_key(&shifted, h.quantization);
                    target = r + q.max(next, &vp) + vmin;
                    pending_v = Some(vp);
                }
                (Variant::Recursive, Event::ExitedBox(_, k)) => {
                    target = r + q.key_value(&v, k);
                }
                (Variant::Recursive, Event::Terminated) => {
                    let k = match next {
                        Vertex::Node(n) => m.exit_index(n).unwrap_or(0),
                        _ => 0,
                    };
                    target = r + q.key_value(&v, k);
                }
                (Variant::SingleExit, Event::EnteredBox(b)) => {
                    let exit = get_exits(m, b)?[0];
                    target = r + lambda * q.max(next, &v) + lambda * q.max(exit, &v);
                }
                (Variant::SingleExit, Event::ExitedBox(..) | Event::Terminated) => {
                    target = r;
                }
                (Variant::Flat, Event::Terminated) => {
                    target = r;
                }
                (_, _) => {
                    target = r + q.max(next, &v);
                }
            }
            let n = q.visit(m, s, &v, i);
            q.update(m, s, &v, i, h.learning_rate.alpha(n), target);
            match (variant, out.event) {
                (Variant::Recursive, Event::EnteredBox(_)) => {
                    let vp = pending_v.take().expect("computed on entry");
                    stack.push(std::mem::replace(&mut v, vp));
                }
                (Variant::Recursive, Event::ExitedBox(..)) => {
                    v = stack.pop().unwrap_or_default();
                }
                _ => {}
            }
            c = out.next;
            steps += 1;
            if let Some(p) = probe.as_mut() {
                p(steps, &q);
            }
            if steps % every == 0 || steps == h.total_steps {
                let stats = evaluate(m, &q, h, h.eval_episodes, &mut erng)?;
                curve.points.push(CurvePoint {
                    step: steps,
                    mean: stats.mean,
                    p10: stats.p10,
                    p90: stats.p90,
                });
            }
        }
    }
    Ok(TrainResult {
        q,
        curve,
        episodes,
        capped_episodes: capped,
    })
}

/// ε-greedy choice. Always draws one uniform for the coin and, when
/// exploring, one index, so learners with equal tables stay in lockstep.
pub(crate) fn choose(
    m: &Rmdp,
    q: &QTable,
    s: Vertex,
    key: &VKey,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> (usize, crate::model::ActionId) {
    let actions = m.enabled_actions(s);
    let coin: f64 = rng.gen();
    let i = if coin < eps {
        rng.gen_range(0..actions.len())
    } else {
        q.argmax_index(s, key)
    };
    (i, actions[i])
}
