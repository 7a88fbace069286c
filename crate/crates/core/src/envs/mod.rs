//! The three experiment environments as validated models.

mod cloud;
mod palindrome;
mod spelunking;

pub use cloud::{cloud_rmdp, cloud_spec};
pub use palindrome::{grid_mdp, palindrome_env, palindrome_grid, palindrome_options, palindrome_pda, palindrome_product, palindrome_spec, PALINDROME_PDA};
pub use spelunking::{spelunking, spelunking_rmdp, spelunking_spec, spelunking_with_layout, Layout, Spelunking, StrategyClass, SPELUNKING_LAYOUT};

use serde::Serialize;

use crate::learn::Hyperparameters;
use crate::model::{ComponentId, NodeId, Rmdp};

/// A built environment with its designated start and recommended settings.
#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub name: String,
    pub model: Rmdp,
    pub start: (ComponentId, NodeId),
    pub hyperparameters: Hyperparameters,
    pub params: serde_json::Value,
}

#[derive(Serialize)]
struct SpecJson<'a> {
    schema: u32,
    name: &'a str,
    start_component: &'a str,
    start_entry: &'a str,
    params: &'a serde_json::Value,
    hyperparameters: serde_json::Value,
}

impl EnvSpec {
    pub fn to_json(&self) -> String {
        let h = &self.hyperparameters;
        let hyper = serde_json::json!({
            "learning_rate": h.learning_rate,
            "exploration": h.exploration,
            "quantization": h.quantization,
            "step_cap": h.step_cap,
            "total_steps": h.total_steps,
            "box_discount": h.box_discount,
            "eval_episodes": h.eval_episodes,
            "exploring_starts": h.exploring_starts,
        });
        let j = SpecJson {
            schema: 1,
            name: &self.name,
            start_component: &self.model.component(self.start.0).name,
            start_entry: self.model.node_name(self.start.1),
            params: &self.params,
            hyperparameters: hyper,
        };
        serde_json::to_string_pretty(&j).expect("serializable")
    }
}
