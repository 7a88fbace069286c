//! Model-to-model constructions: exit lanes for step-wise discounting,
//! pushdown-monitor products and the hierarchical chain family.

mod chain;
mod exit_lane;
mod pda;
mod product;

pub use chain::{hierarchical_chain, hierarchical_chain_1exit};
pub use exit_lane::add_exit_lane;
pub use pda::{parse_pda, Pda, PdaRun, PdaTransition, StackOp, TopPattern};
pub use product::{pda_product, pda_product_detailed, Monitor, MonitorState, Product, ProductOptions, ProductRewards, ProductVertex};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("the product needs a flat model: {0}")]
    FlatModelRequired(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("line {line}: {message}")]
    PdaSyntax { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}
