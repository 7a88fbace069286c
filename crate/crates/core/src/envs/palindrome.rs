use super::EnvSpec;
use crate::learn::{Exploration, Hyperparameters, LearningRate};
use crate::model::{Rmdp, RmdpBuilder, VRef};
use crate::transforms::{parse_pda, pda_product_detailed, Pda, Product, ProductOptions, ProductRewards};

/// Guess-the-midpoint monitor for even palindromes over the four moves.
pub const PALINDROME_PDA: &str = "pda 1
states push pop
initial push
accepting pop
inputs N E S W mid
special mid
symbols N E S W
push N * -> push push(N)
push E * -> push push(E)
push S * -> push push(S)
push W * -> push push(W)
push mid * -> pop stay
pop N N -> pop pop
pop E E -> pop pop
pop S S -> pop pop
pop W W -> pop pop
";

pub fn palindrome_pda() -> Pda {
    parse_pda(PALINDROME_PDA).expect("bundled monitor parses")
}

/// `n x n` grid with cells `c<row><col>`. Entry `start` moves with `go` to
/// a uniformly drawn cell other than `exclude`; moving into the border
/// leaves the agent where it is. Rewards are left to the monitor.
pub fn grid_mdp(n: usize, exclude: Option<(usize, usize)>) -> Rmdp {
    let name = |r: usize, c: usize| format!("c{r}{c}");
    let mut b = RmdpBuilder::new();
    b.entry("Grid", "start");
    let starts: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .filter(|&p| Some(p) != exclude)
        .collect();
    let p = 1.0 / starts.len() as f64;
    let dests: Vec<(VRef, f64)> = starts.iter().map(|&(r, c)| (VRef::node(name(r, c)), p)).collect();
    b.transition("Grid", VRef::node("start"), "go", &dests, 0.0);
    for r in 0..n {
        for c in 0..n {
            let moves = [
                ("N", r.saturating_sub(1), c),
                ("E", r, (c + 1).min(n - 1)),
                ("S", (r + 1).min(n - 1), c),
                ("W", r, c.saturating_sub(1)),
            ];
            for (a, nr, nc) in moves {
                b.edge("Grid", VRef::node(name(r, c)), a, VRef::node(name(nr, nc)), 0.0);
            }
        }
    }
    b.build_validated().expect("grid is well formed")
}

/// The 3x3 grid composed with the even-palindrome monitor: success 50,
/// rejection -5, every other step -1, corruption 0.01, goal `c11`. The
/// initial cell is never the goal.
pub fn palindrome_product() -> Product {
    pda_product_detailed(&palindrome_grid(), &palindrome_pda(), &palindrome_options()).expect("bundled product builds")
}

/// The 3x3 grid without the centre as a start cell.
pub fn palindrome_grid() -> Rmdp {
    grid_mdp(3, Some((1, 1)))
}

pub fn palindrome_options() -> ProductOptions {
    ProductOptions::new(
        ProductRewards {
            success: 50.0,
            reject: -5.0,
            step: -1.0,
        },
        0.01,
        &["c11"],
    )
}

pub fn palindrome_env() -> Rmdp {
    palindrome_product().model
}

pub fn palindrome_spec() -> EnvSpec {
    let p = palindrome_product();
    let mut h = Hyperparameters::new(p.start);
    h.learning_rate = LearningRate::Constant(0.1);
    // Tabular keys need coarse exit-value cells to stay stable while the
    // caller's values are still moving.
    h.quantization = 20.0;
    h.exploration = Exploration {
        initial: 1.0,
        final_value: 0.1,
        final_step: 1_000_000,
    };
    h.step_cap = 200;
    h.total_steps = 3_000_000;
    h.eval_every = Some(30_000);
    EnvSpec {
        name: "palindrome".into(),
        start: p.start,
        hyperparameters: h,
        params: serde_json::json!({
            "grid": 3,
            "goal": "c11",
            "corruption": 0.01,
            "rewards": {"success": 50.0, "reject": -5.0, "step": -1.0},
        }),
        model: p.model,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{decision_step_with, initial_config};
    use crate::transforms::MonitorState;

    #[test]
    fn builds_and_validates() {
        let p = palindrome_product();
        assert!(p.model.validate().is_empty());
        assert_eq!(p.model.components().len(), 5);
    }

    #[test]
    fn palindrome_to_the_centre_pays_fifty() {
        let p = palindrome_product();
        let m = &p.model;
        let act = |s: &str| m.action_by_name(s).unwrap();
        let c = initial_config(m, p.start.0, p.start.1).unwrap();
        // u = 0.2 picks the second start cell, c01.
        let c = decision_step_with(m, &c, act("go"), 0.2).unwrap().next;
        let mut c = c;
        let mut total = 0.0;
        // N bumps, S reaches the centre, then the mirrored half.
        for a in ["N", "S", "mid", "S", "N", "declare"] {
            let o = decision_step_with(m, &c, act(a), 0.5).unwrap();
            total += o.reward;
            c = o.next;
        }
        assert!(c.terminated);
        assert_eq!(p.decode(&c), MonitorState::Accepted);
        assert_eq!(total, 50.0 - 5.0);
    }

    #[test]
    fn mismatch_costs_five_and_ends() {
        let p = palindrome_product();
        let m = &p.model;
        let act = |s: &str| m.action_by_name(s).unwrap();
        let mut c = initial_config(m, p.start.0, p.start.1).unwrap();
        for a in ["go", "N", "mid"] {
            c = decision_step_with(m, &c, act(a), 0.5).unwrap().next;
        }
        let o = decision_step_with(m, &c, act("E"), 0.5).unwrap();
        assert_eq!(o.reward, -5.0);
        assert_eq!(p.decode(&o.next), MonitorState::Rejected);
    }
}
