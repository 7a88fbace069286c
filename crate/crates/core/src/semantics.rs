//! Configurations of the infinite-state MDP induced by an RMDP and the
//! one-step transition relation over them.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::model::{ActionId, BoxId, ComponentId, NodeId, Rmdp, Vertex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("action `{action}` is not enabled at `{vertex}`")]
    IllegalAction { vertex: String, action: String },
    #[error("the configuration has already terminated")]
    SteppedAfterTermination,
    #[error("`{0}` is not an entry node of the component")]
    UnknownEntry(String),
    #[error("vertex `{0}` does not belong to the model")]
    ForeignVertex(String),
}

/// A state of the unfolded process: call stack plus current vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    /// Boxes entered so far, bottom to top.
    pub stack: Vec<BoxId>,
    pub component: ComponentId,
    pub vertex: Vertex,
    pub terminated: bool,
}

impl Configuration {
    /// 0 after termination, otherwise one more than the number of open boxes.
    pub fn stack_height(&self) -> usize {
        if self.terminated {
            0
        } else {
            1 + self.stack.len()
        }
    }
}

pub fn initial_config(m: &Rmdp, component: ComponentId, entry: NodeId) -> Result<Configuration, StepError> {
    let c = m
        .components()
        .get(component.index())
        .ok_or_else(|| StepError::UnknownEntry(m.node_name(entry).to_string()))?;
    if !c.entries.contains(&entry) {
        return Err(StepError::UnknownEntry(m.node_name(entry).to_string()));
    }
    Ok(Configuration {
        stack: Vec::new(),
        component,
        vertex: Vertex::Node(entry),
        terminated: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    EnteredBox(BoxId),
    /// Left box `b` through the exit with the given index.
    ExitedBox(BoxId, usize),
    Internal,
    Terminated,
}

impl Event {
    pub fn tag(&self) -> &'static str {
        match self {
            Event::EnteredBox(_) => "enter",
            Event::ExitedBox(..) => "exit",
            Event::Internal => "internal",
            Event::Terminated => "terminated",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: Configuration,
    pub reward: f64,
    pub event: Event,
}

/// Whether the vertex of `c` needs an agent decision. Call ports and exit
/// nodes advance on their own.
pub fn needs_decision(m: &Rmdp, c: &Configuration) -> bool {
    !c.terminated && m.is_decision_vertex(c.vertex)
}

/// One step of the process. A random uniform is drawn only for internal moves.
pub fn step<R: Rng + ?Sized>(m: &Rmdp, c: &Configuration, a: ActionId, rng: &mut R) -> Result<StepOutcome, StepError> {
    if c.terminated {
        return Err(StepError::SteppedAfterTermination);
    }
    if needs_decision(m, c) {
        let u: f64 = rng.gen();
        step_with(m, c, a, u)
    } else {
        step_with(m, c, a, 0.0)
    }
}

/// Like [`step`] but with the uniform sample supplied by the caller, so two
/// simulators can be driven by the same randomness.
pub fn step_with(m: &Rmdp, c: &Configuration, a: ActionId, u: f64) -> Result<StepOutcome, StepError> {
    if c.terminated {
        return Err(StepError::SteppedAfterTermination);
    }
    match c.vertex {
        Vertex::Call(b, en) => {
            let target = m
                .box_target(b)
                .ok_or_else(|| StepError::ForeignVertex(m.vertex_label(c.vertex)))?;
            let mut stack = c.stack.clone();
            stack.push(b);
            Ok(StepOutcome {
                next: Configuration {
                    stack,
                    component: target,
                    vertex: Vertex::Node(en),
                    terminated: false,
                },
                reward: 0.0,
                event: Event::EnteredBox(b),
            })
        }
        Vertex::Node(ex) if m.is_exit(ex) => {
            let mut stack = c.stack.clone();
            match stack.pop() {
                None => Ok(StepOutcome {
                    next: Configuration {
                        stack,
                        component: c.component,
                        vertex: c.vertex,
                        terminated: true,
                    },
                    reward: 0.0,
                    event: Event::Terminated,
                }),
                Some(b) => {
                    let k = m.exit_index(ex).unwrap_or(0);
                    let owner = m
                        .box_owner(b)
                        .ok_or_else(|| StepError::ForeignVertex(m.box_name(b).to_string()))?;
                    Ok(StepOutcome {
                        next: Configuration {
                            stack,
                            component: owner,
                            vertex: Vertex::Return(b, ex),
                            terminated: false,
                        },
                        reward: 0.0,
                        event: Event::ExitedBox(b, k),
                    })
                }
            }
        }
        v => {
            let row = m.row(v, a).ok_or_else(|| StepError::IllegalAction {
                vertex: m.vertex_label(v),
                action: m.action_name(a).to_string(),
            })?;
            let dest = sample_index(row.dests.iter().map(|&(_, p)| p), u);
            Ok(StepOutcome {
                next: Configuration {
                    stack: c.stack.clone(),
                    component: c.component,
                    vertex: row.dests[dest].0,
                    terminated: false,
                },
                reward: row.reward,
                event: Event::Internal,
            })
        }
    }
}

/// Inverse-CDF selection over the stored order. Falls back to the last
/// entry with positive mass when rounding leaves `u` past the total.
pub fn sample_index(probs: impl IntoIterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// An agent decision followed by the automatic call/exit move it triggers,
/// if any. The returned event is the automatic move's event, or `Internal`.
///
/// `raw_steps` is 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionOutcome {
    pub next: Configuration,
    pub reward: f64,
    pub event: Event,
    pub raw_steps: usize,
}

pub fn decision_step<R: Rng + ?Sized>(m: &Rmdp, c: &Configuration, a: ActionId, rng: &mut R) -> Result<DecisionOutcome, StepError> {
    let first = step(m, c, a, rng)?;
    finish_decision(m, first)
}

pub fn decision_step_with(m: &Rmdp, c: &Configuration, a: ActionId, u: f64) -> Result<DecisionOutcome, StepError> {
    let first = step_with(m, c, a, u)?;
    finish_decision(m, first)
}

fn finish_decision(m: &Rmdp, first: StepOutcome) -> Result<DecisionOutcome, StepError> {
    if needs_decision(m, &first.next) || first.next.terminated {
        return Ok(DecisionOutcome {
            next: first.next,
            reward: first.reward,
            event: first.event,
            raw_steps: 1,
        });
    }
    let second = step_with(m, &first.next, ActionId::NOOP, 0.0)?;
    Ok(DecisionOutcome {
        next: second.next,
        reward: first.reward,
        event: second.event,
        raw_steps: 2,
    })
}

/// Something that picks actions at decision vertices.
pub trait Policy {
    fn act(&mut self, m: &Rmdp, c: &Configuration) -> ActionId;

    /// Called after every raw step, automatic ones included.
    fn observe(&mut self, _m: &Rmdp, _outcome: &StepOutcome) {}

    /// Called at the start of each episode.
    fn reset(&mut self) {}
}

impl<F> Policy for F
where
    F: FnMut(&Rmdp, &Configuration) -> ActionId,
{
    fn act(&mut self, m: &Rmdp, c: &Configuration) -> ActionId {
        self(m, c)
    }
}

/// A stackless strategy given as an action per vertex. Vertices without an
/// entry get their smallest enabled action.
#[derive(Clone, Debug, Default)]
pub struct StacklessPolicy {
    pub choice: std::collections::HashMap<Vertex, ActionId>,
}

impl Policy for StacklessPolicy {
    fn act(&mut self, m: &Rmdp, c: &Configuration) -> ActionId {
        self.choice
            .get(&c.vertex)
            .copied()
            .or_else(|| m.enabled_actions(c.vertex).first().copied())
            .unwrap_or(ActionId::NOOP)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub config: Configuration,
    pub action: ActionId,
    pub outcome: StepOutcome,
}

impl TrajectoryStep {
    pub fn reward(&self) -> f64 {
        self.outcome.reward
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub truncated: bool,
    pub total_reward: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Tab-separated dump: step, stack height, vertex, action, reward, event.
    pub fn dump(&self, m: &Rmdp) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                i,
                s.config.stack_height(),
                m.vertex_label(s.config.vertex),
                m.action_name(s.action),
                s.outcome.reward,
                s.outcome.event.tag()
            );
        }
        out
    }
}

/// Rolls out `policy` from `start` for at most `step_cap` raw steps.
pub fn run_episode<P, R>(m: &Rmdp, policy: &mut P, start: Configuration, rng: &mut R, step_cap: usize) -> Result<Trajectory, StepError>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    assert!(step_cap >= 1, "step_cap must be positive");
    policy.reset();
    let mut steps = Vec::new();
    let mut total = 0.0;
    let mut c = start;
    while !c.terminated && steps.len() < step_cap {
        let a = if needs_decision(m, &c) {
            policy.act(m, &c)
        } else {
            ActionId::NOOP
        };
        let outcome = step(m, &c, a, rng)?;
        policy.observe(m, &outcome);
        total += outcome.reward;
        let next = outcome.next.clone();
        steps.push(TrajectoryStep {
            config: c,
            action: a,
            outcome,
        });
        c = next;
    }
    Ok(Trajectory {
        truncated: !c.terminated,
        steps,
        total_reward: total,
    })
}

/// Summary of a rollout without the per-step record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub total_reward: f64,
    pub raw_steps: usize,
    pub truncated: bool,
}

/// Same dynamics and rng consumption as [`run_episode`], without allocation
/// per step.
pub fn episode_return<P, R>(m: &Rmdp, policy: &mut P, start: Configuration, rng: &mut R, step_cap: usize) -> Result<EpisodeSummary, StepError>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    policy.reset();
    let mut total = 0.0;
    let mut n = 0;
    let mut c = start;
    while !c.terminated && n < step_cap {
        let a = if needs_decision(m, &c) {
            policy.act(m, &c)
        } else {
            ActionId::NOOP
        };
        let outcome = step(m, &c, a, rng)?;
        policy.observe(m, &outcome);
        total += outcome.reward;
        n += 1;
        c = outcome.next;
    }
    Ok(EpisodeSummary {
        total_reward: total,
        raw_steps: n,
        truncated: !c.terminated,
    })
}
