//! Reference solvers used to check the learners.
//!
//! * [`eval_stackless`] / [`solve_1exit`]: linear solves and policy
//!   iteration for 1-exit models.
//! * [`lp_export_1exit`]: the minimize-sum linear program, as LP text.
//! * [`solve_truncated`]: optimal values with the stack height bounded.
//! * [`solve_deterministic`]: exhaustive search on point-mass models.
//! * [`pac_learn_1exit`]: learn the transition function from samples, then
//!   solve the estimate.

mod deterministic;
mod linear;
mod lp;
mod pac;
mod stackless;
mod truncated;

pub use deterministic::{solve_deterministic, DeterministicSolution};
pub use lp::{lp_export_1exit, Constraint, LinearProgram};
pub use pac::{pac_learn_1exit, pac_sample_size, ModelSampler, PacParams, PacResult, TransitionSampler};
pub use stackless::{
    eval_stackless, eval_stackless_discounted, expected_steps, f_residual, solve_1exit, solve_1exit_discounted,
    value_iterate_1exit, ValueSolution,
};
pub use truncated::{eval_truncated, solve_truncated, solve_truncated_with, TruncatedOptions, TruncatedSolution};

use thiserror::Error;

use crate::model::Diagnostic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("model is invalid ({} diagnostics)", .0.len())]
    InvalidModel(Vec<Diagnostic>),
    #[error("the model has a component with more than one exit")]
    NotSingleExit,
    #[error("strategy gives no action at `{0}`")]
    StrategyIncomplete(String),
    #[error("strategy is not proper, (I - A) is singular or yields negative expected steps: {0}")]
    SingularSystem(String),
    #[error("no proper stackless strategy was found")]
    ImproperModel,
    #[error("a transition is not a point mass at `{0}`")]
    NondeterministicModel(String),
    #[error("value changed from {at_cap} to {at_double} when doubling the depth cap")]
    CapUnstable { at_cap: f64, at_double: f64 },
    #[error("configuration revisited on its own path at `{0}`; the model is not proper")]
    Improper(String),
    #[error("iteration did not converge: {0}")]
    NotConverged(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

pub(crate) fn require_valid(m: &crate::model::Rmdp) -> Result<(), OracleError> {
    let d = m.validate();
    if d.is_empty() {
        Ok(())
    } else {
        Err(OracleError::InvalidModel(d))
    }
}
