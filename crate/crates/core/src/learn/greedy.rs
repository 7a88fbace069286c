use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::table::{quantize_key, Keying, QTable, VKey};
use super::{Hyperparameters, LearnError};
use crate::model::{ActionId, Rmdp, Vertex};
use crate::semantics::{episode_return, initial_config, Configuration, Event, Policy, StepOutcome};

/// Evaluation draws from stream 1 of the training seed.
pub(crate) fn eval_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

/// Greedy policy over a Q-table. For exit-value keyed tables it rebuilds the
/// exit-value vector on every box entry the same way training does.
pub struct GreedyPolicy<'a> {
    q: &'a QTable,
    root_exits: usize,
    v: VKey,
    stack: Vec<VKey>,
    started: bool,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(q: &'a QTable, root_exits: usize) -> Self {
        GreedyPolicy {
            q,
            root_exits,
            v: Vec::new(),
            stack: Vec::new(),
            started: false,
        }
    }

    fn ensure_started(&mut self) {
        if !self.started {
            self.started = true;
            self.v = match self.q.keying {
                Keying::ExitValues => vec![0; self.root_exits],
                Keying::VertexOnly => Vec::new(),
            };
            self.stack.clear();
        }
    }

    pub fn current_key(&self) -> &VKey {
        &self.v
    }
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, m: &Rmdp, c: &Configuration) -> ActionId {
        self.ensure_started();
        self.q.argmax(m, c.vertex, &self.v).unwrap_or(ActionId::NOOP)
    }

    fn observe(&mut self, m: &Rmdp, outcome: &StepOutcome) {
        self.ensure_started();
        if self.q.keying != Keying::ExitValues {
            return;
        }
        match outcome.event {
            Event::EnteredBox(b) => {
                let exits = m.return_ports(b).unwrap_or_default();
                let raw: Vec<f64> = exits.iter().map(|&x| self.q.max(x, &self.v)).collect();
                let vmin = raw.iter().copied().fold(f64::INFINITY, f64::min);
                let shifted: Vec<f64> = raw.iter().map(|x| x - vmin).collect();
                let vp = quantize_key(&shifted, self.q.resolution);
                let old = std::mem::replace(&mut self.v, vp);
                self.stack.push(old);
            }
            Event::ExitedBox(..) => {
                self.v = self.stack.pop().unwrap_or_default();
            }
            _ => {}
        }
    }

    fn reset(&mut self) {
        self.started = false;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
    /// Returns of the episodes that entered the mean.
    pub returns: Vec<f64>,
    pub truncated: usize,
}

/// Order statistics used throughout: `p10 = sorted[floor(0.1 n)]`,
/// `p90 = sorted[ceil(0.9 n) - 1]`.
pub fn percentiles(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let lo = (n as f64 * 0.1).floor() as usize;
    let hi = ((n as f64 * 0.9).ceil() as usize).max(1) - 1;
    (s[lo.min(n - 1)], s[hi.min(n - 1)])
}

/// Mean return of the greedy policy from `h.start`. Truncated episodes are
/// dropped unless `h.include_truncated` is set or every episode truncated.
pub fn evaluate(
    m: &Rmdp,
    q: &QTable,
    h: &Hyperparameters,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalStats, LearnError> {
    let start = initial_config(m, h.start.0, h.start.1)?;
    let root_exits = m.component(h.start.0).exits.len();
    let mut policy = GreedyPolicy::new(q, root_exits);
    let mut all = Vec::with_capacity(episodes);
    let mut kept = Vec::with_capacity(episodes);
    let mut truncated = 0;
    for _ in 0..episodes {
        let s = episode_return(m, &mut policy, start.clone(), rng, h.step_cap)?;
        all.push(s.total_reward);
        if s.truncated {
            truncated += 1;
        } else {
            kept.push(s.total_reward);
        }
    }
    let returns = if h.include_truncated || kept.is_empty() { all } else { kept };
    let mean = if returns.is_empty() {
        f64::NAN
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    };
    let (p10, p90) = percentiles(&returns);
    Ok(EvalStats {
        mean,
        p10,
        p90,
        returns,
        truncated,
    })
}

/// Actions the greedy policy picked at each vertex over `episodes` rollouts
/// from `h.start`.
pub fn greedy_choices(
    m: &Rmdp,
    q: &QTable,
    h: &Hyperparameters,
    episodes: usize,
    seed: u64,
) -> Result<BTreeMap<Vertex, BTreeSet<ActionId>>, LearnError> {
    struct Recorder<'a, 'b> {
        inner: GreedyPolicy<'a>,
        seen: &'b mut BTreeMap<Vertex, BTreeSet<ActionId>>,
    }
    impl Policy for Recorder<'_, '_> {
        fn act(&mut self, m: &Rmdp, c: &Configuration) -> ActionId {
            let a = self.inner.act(m, c);
            self.seen.entry(c.vertex).or_default().insert(a);
            a
        }
        fn observe(&mut self, m: &Rmdp, o: &StepOutcome) {
            self.inner.observe(m, o);
        }
        fn reset(&mut self) {
            self.inner.reset();
        }
    }
    let start = initial_config(m, h.start.0, h.start.1)?;
    let mut seen = BTreeMap::new();
    let mut rng = eval_rng(seed);
    let mut rec = Recorder {
        inner: GreedyPolicy::new(q, m.component(h.start.0).exits.len()),
        seen: &mut seen,
    };
    for _ in 0..episodes {
        episode_return(m, &mut rec, start.clone(), &mut rng, h.step_cap)?;
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_rule_for_ten_values() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentiles(&v), (2.0, 9.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentiles(&v), (11.0, 90.0));
        assert_eq!(percentiles(&[4.0]), (4.0, 4.0));
    }
}
