//! Recursive Markov decision processes: the model, its stack semantics,
//! tabular Recursive Q-learning and exact reference solvers.

pub mod envs;
pub mod generate;
pub mod learn;
pub mod model;
pub mod oracle;
pub mod semantics;
pub mod text;
pub mod transforms;

pub use model::{ActionId, BoxId, ComponentId, Diagnostic, NodeId, Rmdp, RmdpBuilder, Row, VRef, Vertex};
pub use semantics::{initial_config, run_episode, step, Configuration, Event, StepOutcome, Trajectory};
