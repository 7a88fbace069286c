use std::collections::BTreeMap;

use rand::Rng;

use super::{require_valid, solve_1exit, OracleError, ValueSolution};
use crate::model::{ActionId, Rmdp, Vertex};
use crate::semantics::sample_index;

/// Black-box access to the true transition function.
pub trait TransitionSampler {
    fn sample(&mut self, q: Vertex, a: ActionId) -> Vertex;
}

impl<F: FnMut(Vertex, ActionId) -> Vertex> TransitionSampler for F {
    fn sample(&mut self, q: Vertex, a: ActionId) -> Vertex {
        self(q, a)
    }
}

/// Samples successors from a known model.
pub struct ModelSampler<'m, R> {
    pub model: &'m Rmdp,
    pub rng: R,
}

impl<R: Rng> TransitionSampler for ModelSampler<'_, R> {
    fn sample(&mut self, q: Vertex, a: ActionId) -> Vertex {
        let row = self.model.row(q, a).expect("sampled an enabled pair");
        let u: f64 = self.rng.gen();
        row.dests[sample_index(row.dests.iter().map(|d| d.1), u)].0
    }
}

/// Constants of the bounded-decline assumption for multi-exit models. Carried
/// and checked, not consumed by any routine here.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacParams {
    pub c_o: f64,
    pub mu: f64,
    pub b: f64,
    /// Bound on the expected number of steps to termination.
    pub k: f64,
}

impl PacParams {
    pub fn check(&self) -> Result<(), OracleError> {
        let bad = |s: &str| Err(OracleError::BadParameter(s.to_string()));
        if !(self.c_o >= 1.0) {
            return bad("c_o must be at least 1");
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad("mu must lie in (0, 1]");
        }
        if !self.b.is_finite() {
            return bad("b must be finite");
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad("K must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PacResult {
    /// The empirical model `M'`.
    pub model: Rmdp,
    pub values: BTreeMap<Vertex, f64>,
    pub samples: BTreeMap<(Vertex, ActionId), usize>,
    /// Samples drawn for each row with more than one successor.
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    /// Per-row L1 target `eps / (2 K² r_max)`.
    pub eps_prime: f64,
    pub solution: ValueSolution,
}

/// `(eps', n)` with `eps' = eps / (2 K² r_max)` and
/// `n = ceil((2 / eps'²) (s_max ln 2 + ln(rows / delta)))`, enough for every
/// stochastic row's empirical L1 error to stay below `eps'` with
/// probability at least `1 - delta`.
pub fn pac_sample_size(eps: f64, delta: f64, k: f64, r_max: f64, s_max: usize, rows: usize) -> (f64, usize) {
    let eps_prime = eps / (2.0 * k * k * r_max);
    if rows == 0 || !eps_prime.is_finite() {
        return (eps_prime, 1);
    }
    let n = (2.0 / (eps_prime * eps_prime)) * (s_max as f64 * std::f64::consts::LN_2 + (rows as f64 / delta).ln());
    (eps_prime, n.ceil().max(1.0) as usize)
}

/// Estimates every row of `skeleton` from `n` samples, builds the empirical
/// model and solves it.
pub fn pac_learn_1exit<S: TransitionSampler>(
    sampler: &mut S,
    skeleton: &Rmdp,
    eps: f64,
    delta: f64,
    k: f64,
    r_max: f64,
) -> Result<PacResult, OracleError> {
    require_valid(skeleton)?;
    if !skeleton.is_single_exit() {
        return Err(OracleError::NotSingleExit);
    }
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) || !(k > 0.0) || !(r_max >= 0.0) {
        return Err(OracleError::BadParameter("need eps > 0, 0 < delta < 1, K > 0, r_max >= 0".into()));
    }
    let mut components = skeleton.components().to_vec();
    let stochastic: Vec<usize> = components
        .iter()
        .flat_map(|c| c.transitions.values())
        .map(|row| row.dests.len())
        .filter(|&s| s > 1)
        .collect();
    let s_max = stochastic.iter().copied().max().unwrap_or(1);
    let (eps_prime, n) = pac_sample_size(eps, delta, k, r_max, s_max, stochastic.len());
    let mut samples = BTreeMap::new();
    for comp in &mut components {
        for (&(q, a), row) in comp.transitions.iter_mut() {
            let draws = if row.dests.len() > 1 { n } else { 1 };
            let mut counts = vec![0usize; row.dests.len()];
            for _ in 0..draws {
                let d = sampler.sample(q, a);
                let j = row.dests.iter().position(|&(x, _)| x == d).ok_or_else(|| {
                    OracleError::BadParameter(format!(
                        "sampled successor `{}` of `{}` is outside the skeleton's support",
                        skeleton.vertex_label(d),
                        skeleton.vertex_label(q)
                    ))
                })?;
                counts[j] += 1;
            }
            for (dest, &c) in row.dests.iter_mut().zip(&counts) {
                dest.1 = c as f64 / draws as f64;
            }
            samples.insert((q, a), draws);
        }
    }
    let model = Rmdp::from_parts(
        components,
        skeleton.node_names().to_vec(),
        skeleton.box_names().to_vec(),
        skeleton.action_names().to_vec(),
    );
    let solution = solve_1exit(&model)?;
    Ok(PacResult {
        model,
        values: solution.values.clone(),
        samples,
        n,
        eps,
        delta,
        eps_prime,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RmdpBuilder, VRef};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_sample_size() {
        let (ep, n) = pac_sample_size(0.2, 0.05, 1.0 / 0.6, 1.0, 2, 1);
        assert!((ep - 0.2 / (2.0 * (1.0 / 0.36))).abs() < 1e-15);
        let want = (2.0 / (ep * ep) * (2.0 * 2f64.ln() + (1.0f64 / 0.05).ln())).ceil() as usize;
        assert_eq!(n, want);
    }

    #[test]
    fn deterministic_model_recovered_with_one_sample_per_row() {
        let mut b = RmdpBuilder::new();
        b.entry("M", "s").exit("M", "t").add_box("M", "k", "C");
        b.entry("C", "ce").exit("C", "cx");
        b.edge("M", VRef::node("s"), "go", VRef::port("k", "ce"), -2.0);
        b.edge("M", VRef::port("k", "cx"), "go", VRef::node("t"), -1.0);
        b.edge("C", VRef::node("ce"), "go", VRef::node("cx"), -5.0);
        let m = b.build_validated().unwrap();
        let mut sampler = ModelSampler {
            model: &m,
            rng: ChaCha8Rng::seed_from_u64(1),
        };
        let r = pac_learn_1exit(&mut sampler, &m, 0.1, 0.05, 3.0, 5.0).unwrap();
        assert!(r.samples.values().all(|&n| n == 1));
        assert_eq!(r.model, m);
        assert_eq!(r.values[&m.vertex_by_label("s").unwrap()], -8.0);
    }

    #[test]
    fn foreign_sample_rejected() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex");
        b.edge("C", VRef::node("en"), "a", VRef::node("ex"), 1.0);
        let m = b.build_validated().unwrap();
        let en = m.vertex_by_label("en").unwrap();
        let mut s = |_q: Vertex, _a: ActionId| en;
        assert!(matches!(pac_learn_1exit(&mut s, &m, 0.1, 0.1, 1.0, 1.0), Err(OracleError::BadParameter(_))));
    }
}
