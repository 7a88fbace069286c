//! Tabular Recursive Q-learning (multi-exit and 1-exit forms) and a flat
//! Q-learning baseline that ignores the call stack.

mod greedy;
mod table;
mod train;

pub use greedy::{evaluate, greedy_choices, percentiles, EvalStats, GreedyPolicy};
pub use table::{quantize, quantize_key, Keying, QTable, VKey};
pub use train::{flat_q_train, rql1_train, rql_train, train_with_probe, CurvePoint, LearningCurve, TrainResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoxId, ComponentId, Diagnostic, NodeId, Rmdp, Vertex};
use crate::semantics::StepError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("model is invalid ({} diagnostics)", .0.len())]
    ModelInvalid(Vec<Diagnostic>),
    #[error("the 1-exit learner needs every component to have exactly one exit")]
    NotSingleExit,
    #[error("unknown box #{0}")]
    UnknownBox(u32),
    #[error("bad hyperparameters: {0}")]
    BadHyperparameters(String),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum LearningRate {
    Constant(f64),
    /// `1 / n^p` where `n` counts updates of the `(state, action)` pair.
    VisitPower(f64),
}

impl LearningRate {
    pub fn alpha(self, visits: u64) -> f64 {
        match self {
            LearningRate::Constant(a) => a,
            LearningRate::VisitPower(p) => 1.0 / (visits.max(1) as f64).powf(p),
        }
    }
}

/// ε-greedy exploration with linear decay from `initial` to `final_value`
/// over the first `final_step` training steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub final_step: u64,
}

impl Exploration {
    pub fn constant(eps: f64) -> Self {
        Exploration {
            initial: eps,
            final_value: eps,
            final_step: 0,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if step >= self.final_step {
            self.final_value
        } else {
            let t = step as f64 / self.final_step as f64;
            self.initial + (self.final_value - self.initial) * t
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    pub learning_rate: LearningRate,
    pub exploration: Exploration,
    pub quantization: f64,
    /// Raw steps per episode, for training and evaluation alike.
    pub step_cap: usize,
    /// Number of Q-updates to perform.
    pub total_steps: u64,
    /// Box-wise discount for the 1-exit learner.
    pub box_discount: f64,
    pub seed: u64,
    /// Designated start; evaluation always starts here.
    pub start: (ComponentId, NodeId),
    /// Start training episodes at a uniformly drawn `(component, entry)`.
    pub exploring_starts: bool,
    pub eval_episodes: usize,
    /// Steps between evaluations; `None` means `max(1, total_steps / 200)`.
    pub eval_every: Option<u64>,
    pub initial_q: f64,
    /// Count truncated evaluation episodes in the mean.
    pub include_truncated: bool,
}

impl Hyperparameters {
    pub fn new(start: (ComponentId, NodeId)) -> Self {
        Hyperparameters {
            learning_rate: LearningRate::Constant(0.1),
            exploration: Exploration::constant(0.1),
            quantization: 0.001,
            step_cap: 1000,
            total_steps: 10_000,
            box_discount: 1.0,
            seed: 0,
            start,
            exploring_starts: false,
            eval_episodes: 100,
            eval_every: None,
            initial_q: 0.0,
            include_truncated: false,
        }
    }

    pub fn eval_interval(&self) -> u64 {
        self.eval_every.unwrap_or((self.total_steps / 200).max(1)).max(1)
    }

    pub fn check(&self) -> Result<(), LearnError> {
        let bad = |s: &str| Err(LearnError::BadHyperparameters(s.to_string()));
        match self.learning_rate {
            LearningRate::Constant(a) if !(a > 0.0 && a <= 1.0) => return bad("learning rate must lie in (0, 1]"),
            LearningRate::VisitPower(p) if !(p > 0.5 && p <= 1.0) => return bad("visit power must lie in (0.5, 1]"),
            _ => {}
        }
        let e = &self.exploration;
        if !(0.0..=1.0).contains(&e.initial) || !(0.0..=1.0).contains(&e.final_value) {
            return bad("exploration rates must lie in [0, 1]");
        }
        if !(self.quantization > 0.0) {
            return bad("quantization must be positive");
        }
        if !(self.box_discount > 0.0 && self.box_discount <= 1.0) {
            return bad("box discount must lie in (0, 1]");
        }
        if self.step_cap == 0 {
            return bad("step cap must be positive");
        }
        Ok(())
    }
}

/// Return ports of `b` in the callee's exit order.
pub fn get_exits(m: &Rmdp, b: BoxId) -> Result<Vec<Vertex>, LearnError> {
    m.return_ports(b).ok_or(LearnError::UnknownBox(b.0))
}
