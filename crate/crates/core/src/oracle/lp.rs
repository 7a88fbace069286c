use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::{solve_1exit, OracleError};
use crate::model::{Rmdp, Vertex};

/// `Σ coeffs · t >= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, t: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * t[i]).sum()
    }
}

/// Minimise `Σ t_q` subject to the constraints, with exit variables fixed
/// to zero and everything else free.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub vars: Vec<Vertex>,
    pub labels: Vec<String>,
    pub constraints: Vec<Constraint>,
    pub fixed_zero: Vec<usize>,
}

impl LinearProgram {
    pub fn var(&self, v: Vertex) -> Option<usize> {
        self.vars.iter().position(|&x| x == v)
    }

    /// Whether `t` satisfies every constraint and bound up to `tol`.
    pub fn is_feasible(&self, t: &[f64], tol: f64) -> bool {
        self.fixed_zero.iter().all(|&i| t[i].abs() <= tol)
            && self.constraints.iter().all(|c| c.lhs(t) >= c.rhs - tol)
    }

    /// CPLEX LP text.
    pub fn to_lp_text(&self) -> String {
        let mut out = String::new();
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "\\ t{i} = {l}");
        }
        out.push_str("Minimize\n obj:");
        for i in 0..self.vars.len() {
            let _ = write!(out, "{} t{i}", if i == 0 { "" } else { " +" });
        }
        out.push_str("\nSubject To\n");
        for (k, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{k}:");
            for (j, &(i, coef)) in c.coeffs.iter().enumerate() {
                let sign = if coef < 0.0 { "-" } else if j == 0 { "" } else { "+" };
                if !sign.is_empty() {
                    let _ = write!(out, " {sign}");
                }
                let mag = coef.abs();
                if mag == 1.0 {
                    let _ = write!(out, " t{i}");
                } else {
                    let _ = write!(out, " {mag} t{i}");
                }
            }
            let _ = writeln!(out, " >= {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for i in 0..self.vars.len() {
            if self.fixed_zero.contains(&i) {
                let _ = writeln!(out, " t{i} = 0");
            } else {
                let _ = writeln!(out, " t{i} free");
            }
        }
        out.push_str("End\n");
        out
    }
}

/// The minimise-sum program whose optimum is the fixed point of the 1-exit
/// equations. Exported only for models that [`solve_1exit`] accepts.
pub fn lp_export_1exit(m: &Rmdp) -> Result<LinearProgram, OracleError> {
    if !m.is_single_exit() {
        return Err(OracleError::NotSingleExit);
    }
    solve_1exit(m)?;
    let vars = m.all_vertices();
    let index: HashMap<Vertex, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let labels = vars.iter().map(|&v| m.vertex_label(v)).collect();
    let mut constraints = Vec::new();
    let mut fixed_zero = Vec::new();
    for (i, &q) in vars.iter().enumerate() {
        match q {
            Vertex::Node(n) if m.is_exit(n) => fixed_zero.push(i),
            Vertex::Call(b, en) => {
                let target = m.box_target(b).expect("validated");
                let ex = m.component(target).exits[0];
                let mut coeffs = BTreeMap::new();
                *coeffs.entry(i).or_insert(0.0) += 1.0;
                *coeffs.entry(index[&Vertex::Node(en)]).or_insert(0.0) -= 1.0;
                *coeffs.entry(index[&Vertex::Return(b, ex)]).or_insert(0.0) -= 1.0;
                constraints.push(Constraint {
                    coeffs: nonzero(coeffs, i),
                    rhs: 0.0,
                });
            }
            _ => {
                for &a in m.enabled_actions(q) {
                    let row = m.row(q, a).expect("enabled");
                    let mut coeffs = BTreeMap::new();
                    *coeffs.entry(i).or_insert(0.0) += 1.0;
                    for &(d, p) in &row.dests {
                        *coeffs.entry(index[&d]).or_insert(0.0) -= p;
                    }
                    constraints.push(Constraint {
                        coeffs: nonzero(coeffs, i),
                        rhs: row.reward,
                    });
                }
            }
        }
    }
    Ok(LinearProgram {
        vars,
        labels,
        constraints,
        fixed_zero,
    })
}

fn nonzero(coeffs: BTreeMap<usize, f64>, own: usize) -> Vec<(usize, f64)> {
    let out: Vec<(usize, f64)> = coeffs.into_iter().filter(|&(_, c)| c != 0.0).collect();
    if out.is_empty() {
        vec![(own, 0.0)]
    } else {
        out
    }
}
