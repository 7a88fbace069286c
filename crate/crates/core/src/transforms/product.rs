use std::collections::{HashMap, HashSet};

use super::pda::{Pda, PdaRun, StackOp};
use super::TransformError;
use crate::model::{ActionId, BoxId, ComponentId, NodeId, Rmdp, RmdpBuilder, VRef, Vertex};
use crate::semantics::Configuration;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductRewards {
    pub success: f64,
    pub reject: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductOptions {
    pub rewards: ProductRewards,
    /// Chance that an agent action is replaced by the special input.
    pub corruption: f64,
    /// MDP nodes at which a declaration can succeed.
    pub goals: Vec<String>,
    /// Name of the declaration action.
    pub declare: String,
    /// Name of the single action on the return ports that carry a rejection
    /// down the stack.
    pub sink: String,
}

impl ProductOptions {
    pub fn new(rewards: ProductRewards, corruption: f64, goals: &[&str]) -> Self {
        ProductOptions {
            rewards,
            corruption,
            goals: goals.iter().map(|s| s.to_string()).collect(),
            declare: "declare".into(),
            sink: "sink".into(),
        }
    }
}

/// Monitor-level meaning of a product vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProductVertex {
    /// MDP node and PDA control state, with the stack given by the context.
    State { cell: NodeId, state: usize },
    /// Exit reached by a pop; the caller resumes in this state.
    Popped { cell: NodeId, state: usize },
    Rejected,
    Accepted,
}

/// What the direct monitor tracks. Rejected and accepted runs forget their
/// position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MonitorState {
    Running { cell: NodeId, state: usize, stack: Vec<usize> },
    Accepted,
    Rejected,
}

#[derive(Clone, Debug)]
pub struct Product {
    pub model: Rmdp,
    pub start: (ComponentId, NodeId),
    pub vertices: HashMap<Vertex, ProductVertex>,
    pub box_symbol: HashMap<BoxId, usize>,
    pub sink_action: ActionId,
}

impl Product {
    fn stack_symbols(&self, stack: &[BoxId]) -> Vec<usize> {
        stack.iter().map(|b| self.box_symbol[b]).collect()
    }

    /// Monitor state of a configuration reached after a decision step.
    pub fn decode(&self, c: &Configuration) -> MonitorState {
        match self.vertices.get(&c.vertex) {
            Some(ProductVertex::State { cell, state }) if !c.terminated => MonitorState::Running {
                cell: *cell,
                state: *state,
                stack: self.stack_symbols(&c.stack),
            },
            Some(ProductVertex::Accepted) => MonitorState::Accepted,
            Some(ProductVertex::Rejected) => MonitorState::Rejected,
            other => panic!("configuration at {} is not a resting point ({other:?})", self.model.vertex_label(c.vertex)),
        }
    }

    /// Monitor state reached when a row from `c` moves to `dest`, once the
    /// automatic call or exit move has happened.
    pub fn decode_dest(&self, c: &Configuration, dest: Vertex) -> MonitorState {
        let mut stack = self.stack_symbols(&c.stack);
        match dest {
            Vertex::Call(b, en) => match self.vertices[&Vertex::Node(en)] {
                ProductVertex::State { cell, state } => {
                    stack.push(self.box_symbol[&b]);
                    MonitorState::Running { cell, state, stack }
                }
                other => panic!("entry decodes to {other:?}"),
            },
            v => match self.vertices[&v] {
                ProductVertex::State { cell, state } => MonitorState::Running { cell, state, stack },
                ProductVertex::Popped { cell, state } => {
                    stack.pop();
                    MonitorState::Running { cell, state, stack }
                }
                ProductVertex::Rejected => MonitorState::Rejected,
                ProductVertex::Accepted => MonitorState::Accepted,
            },
        }
    }
}

enum Target {
    Stay(NodeId, usize),
    Push(usize, NodeId, usize),
    Pop(NodeId, usize),
    Reject,
    Accept,
}

struct Builder<'a> {
    mdp: &'a Rmdp,
    pda: &'a Pda,
    opts: &'a ProductOptions,
    goals: HashSet<NodeId>,
    /// MDP action id to PDA input index.
    reads: HashMap<ActionId, usize>,
    cells: Vec<NodeId>,
}

fn comp_name(pda: &Pda, ctx: Option<usize>) -> String {
    match ctx {
        None => "Z".into(),
        Some(g) => format!("G_{}", pda.symbols[g]),
    }
}

impl Builder<'_> {
    fn cell(&self, s: NodeId) -> &str {
        self.mdp.node_name(s)
    }

    fn state_node(&self, ctx: Option<usize>, s: NodeId, p: usize) -> String {
        format!("{}.{}.{}", comp_name(self.pda, ctx), self.cell(s), self.pda.states[p])
    }

    fn entry_node(&self, ctx: Option<usize>, s: NodeId, p: usize) -> String {
        format!("{}.in.{}.{}", comp_name(self.pda, ctx), self.cell(s), self.pda.states[p])
    }

    fn out_node(&self, ctx: Option<usize>, s: NodeId, p: usize) -> String {
        format!("{}.out.{}.{}", comp_name(self.pda, ctx), self.cell(s), self.pda.states[p])
    }

    fn rej_node(&self, ctx: Option<usize>) -> String {
        format!("{}.rej", comp_name(self.pda, ctx))
    }

    fn box_name(&self, ctx: Option<usize>, g: usize) -> String {
        format!("{}.push.{}", comp_name(self.pda, ctx), self.pda.symbols[g])
    }

    /// Effect of reading `input` in state `p` under top `ctx`, landing in
    /// MDP node `s`.
    fn read(&self, ctx: Option<usize>, s: NodeId, p: usize, input: usize) -> Target {
        match self.pda.delta(p, input, ctx) {
            None => Target::Reject,
            Some((q, StackOp::Stay)) => Target::Stay(s, q),
            Some((q, StackOp::Push(g))) => Target::Push(g, s, q),
            Some((q, StackOp::Pop)) => Target::Pop(s, q),
        }
    }

    fn vref(&self, ctx: Option<usize>, t: &Target) -> VRef {
        match *t {
            Target::Stay(s, q) => VRef::node(self.state_node(ctx, s, q)),
            Target::Push(g, s, q) => VRef::port(self.box_name(ctx, g), self.entry_node(Some(g), s, q)),
            Target::Pop(s, q) => VRef::node(self.out_node(ctx, s, q)),
            Target::Reject => VRef::node(self.rej_node(ctx)),
            Target::Accept => VRef::node("Z.done"),
        }
    }

    /// Rows of the vertex that stands for `(s, p)` in context `ctx`.
    fn rows(&self, ctx: Option<usize>, s: NodeId, p: usize) -> Vec<(String, f64, Vec<(VRef, f64)>)> {
        let r = self.opts.rewards;
        let k = self.opts.corruption;
        let special = self.pda.special;
        let cost = |t: &Target| if matches!(t, Target::Reject) { r.reject } else { r.step };
        let mut out = Vec::new();
        let v = Vertex::Node(s);
        for &a in self.mdp.enabled_actions(v) {
            let row = self.mdp.row(v, a).expect("enabled");
            let name = self.mdp.action_name(a).to_string();
            let mut dests = Vec::new();
            let reward = match self.reads.get(&a) {
                None => {
                    for &(d, q) in &row.dests {
                        let Vertex::Node(d) = d else { unreachable!("flat model") };
                        dests.push((Target::Stay(d, p), q));
                    }
                    row.reward
                }
                Some(&input) => {
                    let intended = self.read(ctx, s, p, input);
                    let reward = cost(&intended);
                    for &(d, q) in &row.dests {
                        let Vertex::Node(d) = d else { unreachable!("flat model") };
                        dests.push((self.read(ctx, d, p, input), (1.0 - k) * q));
                    }
                    dests.push((self.read(ctx, s, p, special), k));
                    reward
                }
            };
            out.push((name, reward, self.merge(ctx, dests)));
        }
        if self.mdp.is_entry(s) {
            return out;
        }
        let t = self.read(ctx, s, p, special);
        let reward = cost(&t);
        out.push((self.pda.inputs[special].clone(), reward, self.merge(ctx, vec![(t, 1.0)])));
        let success = ctx.is_none() && self.pda.accepting.contains(&p) && self.goals.contains(&s);
        let (intended, reward) = if success {
            (Target::Accept, r.success)
        } else {
            (Target::Reject, r.reject)
        };
        let dests = vec![(intended, 1.0 - k), (self.read(ctx, s, p, special), k)];
        out.push((self.opts.declare.clone(), reward, self.merge(ctx, dests)));
        out
    }

    fn merge(&self, ctx: Option<usize>, dests: Vec<(Target, f64)>) -> Vec<(VRef, f64)> {
        let mut out: Vec<(VRef, f64)> = Vec::new();
        for (t, q) in dests {
            if q <= 0.0 {
                continue;
            }
            let v = self.vref(ctx, &t);
            match out.iter_mut().find(|(x, _)| *x == v) {
                Some(e) => e.1 += q,
                None => out.push((v, q)),
            }
        }
        out
    }
}

fn check_inputs(mdp: &Rmdp, pda: &Pda, opts: &ProductOptions) -> Result<HashSet<NodeId>, TransformError> {
    pda.check()?;
    if mdp.components().len() != 1 || !mdp.is_flat() {
        return Err(TransformError::FlatModelRequired("expected one component without boxes".into()));
    }
    let c = &mdp.components()[0];
    if !c.exits.is_empty() {
        return Err(TransformError::FlatModelRequired("the MDP must not have exits; runs end by declaration".into()));
    }
    if c.entries.is_empty() {
        return Err(TransformError::FlatModelRequired("the MDP needs an entry".into()));
    }
    if !(0.0..1.0).contains(&opts.corruption) {
        return Err(TransformError::BadParameter("corruption must lie in [0, 1)".into()));
    }
    let special = &pda.inputs[pda.special];
    for reserved in [special, &opts.declare, &opts.sink] {
        if mdp.action_by_name(reserved).is_some() {
            return Err(TransformError::BadParameter(format!("`{reserved}` is already an MDP action")));
        }
    }
    if opts.declare == opts.sink || pda.input(&opts.declare).is_some() || pda.input(&opts.sink).is_some() {
        return Err(TransformError::BadParameter("declare and sink actions must be fresh".into()));
    }
    let mut goals = HashSet::new();
    for g in &opts.goals {
        let n = mdp
            .node_by_name(g)
            .ok_or_else(|| TransformError::BadParameter(format!("unknown goal `{g}`")))?;
        goals.insert(n);
    }
    Ok(goals)
}

/// [`pda_product_detailed`] without the decoding tables.
pub fn pda_product(mdp: &Rmdp, pda: &Pda, opts: &ProductOptions) -> Result<Rmdp, TransformError> {
    Ok(pda_product_detailed(mdp, pda, opts)?.model)
}

/// Composes a one-component, box-free MDP with a pushdown monitor.
///
/// Component `Z` runs with the empty stack and `G_<g>` with `g` on top. A
/// vertex stands for an (MDP node, control state) pair; entries and
/// return ports carry the same rows as the node they stand for, so stack
/// moves cost the agent no extra decisions. A push calls `G_<g>` through
/// box `<ctx>.push.<g>` and a pop leaves through exit `out.<node>.<state>`.
/// A rejection moves to exit `rej`, and every caller's return port for it
/// continues to its own `rej` with the sink action and reward 0.
///
/// The reward of a step is that of the action as selected: `reject` if it
/// sends the monitor to the sink, `step` otherwise, and for MDP actions the
/// monitor does not read, the MDP's own reward. Corruption changes only
/// where the step goes. Declaring succeeds with the empty stack, an
/// accepting state and a goal node; otherwise it rejects. Special input and
/// declaration are offered at every non-entry MDP node.
pub fn pda_product_detailed(mdp: &Rmdp, pda: &Pda, opts: &ProductOptions) -> Result<Product, TransformError> {
    let goals = check_inputs(mdp, pda, opts)?;
    let comp = &mdp.components()[0];
    let reads = comp
        .actions
        .iter()
        .filter_map(|&a| pda.input(mdp.action_name(a)).map(|i| (a, i)))
        .collect();
    // Name order, so the product does not depend on how the source was numbered.
    let mut cells: Vec<NodeId> = comp.nodes.iter().copied().filter(|&n| !mdp.is_entry(n)).collect();
    cells.sort_by(|a, b| mdp.node_name(*a).cmp(mdp.node_name(*b)));
    let bld = Builder {
        mdp,
        pda,
        opts,
        goals,
        reads,
        cells,
    };
    let states = 0..pda.states.len();
    let contexts: Vec<Option<usize>> = std::iter::once(None).chain((0..pda.symbols.len()).map(Some)).collect();

    let mut b = RmdpBuilder::new();
    let mut named: Vec<(String, ProductVertex)> = Vec::new();
    let mut ports: Vec<(String, String, ProductVertex)> = Vec::new();
    let mut box_symbol_names = Vec::new();
    for &ctx in &contexts {
        let c = comp_name(pda, ctx);
        b.component(&c);
        match ctx {
            None => {
                for &en in &comp.entries {
                    let e = bld.entry_node(None, en, pda.initial);
                    b.entry(&c, &e);
                    named.push((e, ProductVertex::State { cell: en, state: pda.initial }));
                }
                b.exit(&c, "Z.done");
                named.push(("Z.done".into(), ProductVertex::Accepted));
            }
            Some(_) => {
                for &s in &bld.cells {
                    for p in states.clone() {
                        let e = bld.entry_node(ctx, s, p);
                        b.entry(&c, &e);
                        named.push((e, ProductVertex::State { cell: s, state: p }));
                    }
                }
                for &s in &bld.cells {
                    for p in states.clone() {
                        let x = bld.out_node(ctx, s, p);
                        b.exit(&c, &x);
                        named.push((x, ProductVertex::Popped { cell: s, state: p }));
                    }
                }
            }
        }
        b.exit(&c, &bld.rej_node(ctx));
        named.push((bld.rej_node(ctx), ProductVertex::Rejected));
        for g in 0..pda.symbols.len() {
            let bx = bld.box_name(ctx, g);
            b.add_box(&c, &bx, &comp_name(pda, Some(g)));
            box_symbol_names.push((bx, g));
        }
    }
    for &ctx in &contexts {
        let c = comp_name(pda, ctx);
        let emit = |b: &mut RmdpBuilder, src: VRef, s: NodeId, p: usize| {
            for (action, reward, dests) in bld.rows(ctx, s, p) {
                b.transition(&c, src.clone(), &action, &dests, reward);
            }
        };
        if ctx.is_none() {
            for &en in &comp.entries {
                emit(&mut b, VRef::node(bld.entry_node(None, en, pda.initial)), en, pda.initial);
            }
        } else {
            for &s in &bld.cells {
                for p in states.clone() {
                    emit(&mut b, VRef::node(bld.entry_node(ctx, s, p)), s, p);
                }
            }
        }
        for &s in &bld.cells {
            for p in states.clone() {
                let n = bld.state_node(ctx, s, p);
                named.push((n.clone(), ProductVertex::State { cell: s, state: p }));
                emit(&mut b, VRef::node(n), s, p);
            }
        }
        for g in 0..pda.symbols.len() {
            let bx = bld.box_name(ctx, g);
            for &s in &bld.cells {
                for p in states.clone() {
                    let x = bld.out_node(Some(g), s, p);
                    ports.push((bx.clone(), x.clone(), ProductVertex::State { cell: s, state: p }));
                    emit(&mut b, VRef::port(&bx, &x), s, p);
                }
            }
            let rej = bld.rej_node(Some(g));
            ports.push((bx.clone(), rej.clone(), ProductVertex::Rejected));
            b.edge(&c, VRef::port(&bx, &rej), &opts.sink, VRef::node(bld.rej_node(ctx)), 0.0);
        }
    }
    let model = b.build_validated()?;

    let mut vertices = HashMap::new();
    for (n, info) in named {
        vertices.insert(Vertex::Node(model.node_by_name(&n).expect("declared")), info);
    }
    for (bx, x, info) in ports {
        let v = Vertex::Return(model.box_by_name(&bx).expect("declared"), model.node_by_name(&x).expect("declared"));
        vertices.insert(v, info);
    }
    let box_symbol = box_symbol_names
        .into_iter()
        .map(|(bx, g)| (model.box_by_name(&bx).expect("declared"), g))
        .collect();
    let start = (
        ComponentId(0),
        model
            .node_by_name(&bld.entry_node(None, comp.entries[0], pda.initial))
            .expect("declared"),
    );
    let sink_action = model.action_by_name(&opts.sink).unwrap_or(ActionId::NOOP);
    Ok(Product {
        model,
        start,
        vertices,
        box_symbol,
        sink_action,
    })
}

/// Direct interpreter of the MDP run alongside the monitor, with an
/// explicit stack. Used to check the product.
pub struct Monitor<'a> {
    mdp: &'a Rmdp,
    pda: &'a Pda,
    opts: &'a ProductOptions,
    goals: HashSet<NodeId>,
}

impl<'a> Monitor<'a> {
    pub fn new(mdp: &'a Rmdp, pda: &'a Pda, opts: &'a ProductOptions) -> Result<Self, TransformError> {
        let goals = check_inputs(mdp, pda, opts)?;
        Ok(Monitor { mdp, pda, opts, goals })
    }

    pub fn start(&self) -> MonitorState {
        MonitorState::Running {
            cell: self.mdp.components()[0].entries[0],
            state: self.pda.initial,
            stack: Vec::new(),
        }
    }

    /// Action names available in `st`, MDP actions first.
    pub fn actions(&self, st: &MonitorState) -> Vec<String> {
        let MonitorState::Running { cell, .. } = st else {
            return Vec::new();
        };
        let mut out: Vec<String> = self
            .mdp
            .enabled_actions(Vertex::Node(*cell))
            .iter()
            .map(|&a| self.mdp.action_name(a).to_string())
            .collect();
        if !self.mdp.is_entry(*cell) {
            out.push(self.pda.inputs[self.pda.special].clone());
            out.push(self.opts.declare.clone());
        }
        out
    }

    fn after(&self, cell: NodeId, run: &PdaRun, input: usize) -> (MonitorState, bool) {
        let mut r = run.clone();
        self.pda.feed(&mut r, input);
        if r.rejected {
            (MonitorState::Rejected, true)
        } else {
            (
                MonitorState::Running {
                    cell,
                    state: r.state,
                    stack: r.stack,
                },
                false,
            )
        }
    }

    /// Reward and successor distribution of `action`, or `None` if it is
    /// not available.
    pub fn outcomes(&self, st: &MonitorState, action: &str) -> Option<(f64, Vec<(MonitorState, f64)>)> {
        let MonitorState::Running { cell, state, stack } = st else {
            return None;
        };
        let run = PdaRun {
            state: *state,
            stack: stack.clone(),
            rejected: false,
        };
        let r = self.opts.rewards;
        let k = self.opts.corruption;
        let special = self.pda.special;
        let cost = |rejected: bool| if rejected { r.reject } else { r.step };
        if !self.actions(st).iter().any(|a| a == action) {
            return None;
        }
        if let Some(a) = self.mdp.action_by_name(action) {
            let row = self.mdp.row(Vertex::Node(*cell), a)?;
            let succ = row.dests.iter().map(|&(d, q)| match d {
                Vertex::Node(n) => (n, q),
                _ => unreachable!("flat model"),
            });
            return Some(match self.pda.input(action) {
                None => (
                    row.reward,
                    succ.map(|(n, q)| {
                        (
                            MonitorState::Running {
                                cell: n,
                                state: *state,
                                stack: stack.clone(),
                            },
                            q,
                        )
                    })
                    .collect(),
                ),
                Some(i) => {
                    let (_, rejects) = self.after(*cell, &run, i);
                    let mut out: Vec<(MonitorState, f64)> = succ.map(|(n, q)| (self.after(n, &run, i).0, (1.0 - k) * q)).collect();
                    out.push((self.after(*cell, &run, special).0, k));
                    (cost(rejects), out)
                }
            });
        }
        if action == self.pda.inputs[special] {
            let (s, rejects) = self.after(*cell, &run, special);
            return Some((cost(rejects), vec![(s, 1.0)]));
        }
        let ok = self.pda.accepts_now(&run) && self.goals.contains(cell);
        let (s, reward) = if ok {
            (MonitorState::Accepted, r.success)
        } else {
            (MonitorState::Rejected, r.reject)
        };
        Some((reward, vec![(s, 1.0 - k), (self.after(*cell, &run, special).0, k)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{decision_step, initial_config, needs_decision};
    use crate::transforms::parse_pda;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corridor() -> Rmdp {
        let mut b = RmdpBuilder::new();
        b.entry("W", "start");
        b.edge("W", VRef::node("start"), "go", VRef::node("l"), 0.0);
        b.edge("W", VRef::node("l"), "a", VRef::node("r"), 0.0);
        b.edge("W", VRef::node("l"), "b", VRef::node("l"), 0.0);
        b.transition("W", VRef::node("r"), "a", &[(VRef::node("r"), 0.5), (VRef::node("l"), 0.5)], 0.0);
        b.edge("W", VRef::node("r"), "b", VRef::node("l"), 0.0);
        b.build_validated().unwrap()
    }

    const EVEN: &str = "pda 1
states push pop
initial push
accepting pop
inputs a b mid
special mid
symbols a b
push a * -> push push(a)
push b * -> push push(b)
push mid * -> pop stay
pop a a -> pop pop
pop b b -> pop pop
";

    fn opts(k: f64) -> ProductOptions {
        ProductOptions::new(
            ProductRewards {
                success: 50.0,
                reject: -5.0,
                step: -1.0,
            },
            k,
            &["l"],
        )
    }

    #[test]
    fn product_validates() {
        let pda = parse_pda(EVEN).unwrap();
        let p = pda_product_detailed(&corridor(), &pda, &opts(0.1)).unwrap();
        assert!(p.model.validate().is_empty());
        assert_eq!(p.model.components().len(), 3);
    }

    #[test]
    fn immediate_acceptance() {
        let mut b = RmdpBuilder::new();
        b.entry("W", "start");
        b.edge("W", VRef::node("start"), "go", VRef::node("g"), 0.0);
        b.edge("W", VRef::node("g"), "stay", VRef::node("g"), 0.0);
        let mdp = b.build_validated().unwrap();
        let pda = parse_pda("pda 1\nstates q\ninitial q\naccepting q\ninputs mid\nspecial mid\nsymbols\n").unwrap();
        let o = ProductOptions::new(
            ProductRewards {
                success: 50.0,
                reject: -5.0,
                step: -1.0,
            },
            0.0,
            &["g"],
        );
        let p = pda_product_detailed(&mdp, &pda, &o).unwrap();
        let m = &p.model;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = initial_config(m, p.start.0, p.start.1).unwrap();
        let c = decision_step(m, &c, m.action_by_name("go").unwrap(), &mut rng).unwrap().next;
        let out = decision_step(m, &c, m.action_by_name("declare").unwrap(), &mut rng).unwrap();
        assert_eq!(out.reward, 50.0);
        assert!(out.next.terminated);
        assert_eq!(p.decode(&out.next), MonitorState::Accepted);
    }

    #[test]
    fn pop_on_empty_stack_rejects() {
        let pda = parse_pda(&format!("{EVEN}pop a * -> pop pop\n")).unwrap();
        let p = pda_product_detailed(&corridor(), &pda, &opts(0.0)).unwrap();
        let m = &p.model;
        let v = m.vertex_by_label("Z.l.pop").unwrap();
        let row = m.row(v, m.action_by_name("a").unwrap()).unwrap();
        assert_eq!(row.reward, -5.0);
        assert_eq!(row.dests, vec![(m.vertex_by_label("Z.rej").unwrap(), 1.0)]);
    }

    #[test]
    fn rejection_walks_down_the_stack_without_reward() {
        let pda = parse_pda(EVEN).unwrap();
        let p = pda_product_detailed(&corridor(), &pda, &opts(0.0)).unwrap();
        let m = &p.model;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let act = |s: &str| m.action_by_name(s).unwrap();
        let mut c = initial_config(m, p.start.0, p.start.1).unwrap();
        for a in ["go", "b", "b", "mid"] {
            c = decision_step(m, &c, act(a), &mut rng).unwrap().next;
        }
        assert_eq!(c.stack.len(), 2);
        let out = decision_step(m, &c, act("a"), &mut rng).unwrap();
        assert_eq!(out.reward, -5.0);
        let mut c = out.next;
        let mut extra = 0;
        while !c.terminated {
            assert_eq!(p.decode(&c), MonitorState::Rejected);
            let o = decision_step(m, &c, p.sink_action, &mut rng).unwrap();
            assert_eq!(o.reward, 0.0);
            c = o.next;
            extra += 1;
        }
        assert_eq!(extra, 2);
    }

    fn agree(mdp: &Rmdp, pda: &Pda, o: &ProductOptions, runs: usize, seed: u64) {
        let p = pda_product_detailed(mdp, pda, o).unwrap();
        let mon = Monitor::new(mdp, pda, o).unwrap();
        let m = &p.model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..runs {
            let mut c = initial_config(m, p.start.0, p.start.1).unwrap();
            let mut st = mon.start();
            assert_eq!(p.decode(&c), st);
            for _ in 0..60 {
                if c.terminated {
                    break;
                }
                assert!(needs_decision(m, &c));
                if st == MonitorState::Rejected {
                    c = decision_step(m, &c, p.sink_action, &mut rng).unwrap().next;
                    continue;
                }
                let mut want = mon.actions(&st);
                want.sort();
                let mut got: Vec<String> = m.enabled_actions(c.vertex).iter().map(|&a| m.action_name(a).to_string()).collect();
                got.sort();
                assert_eq!(got, want);
                let name = &want[rng.gen_range(0..want.len())];
                let a = m.action_by_name(name).unwrap();
                let (reward, dist) = mon.outcomes(&st, name).unwrap();
                let row = m.row(c.vertex, a).unwrap();
                assert_eq!(row.reward, reward);
                let mut expected: std::collections::BTreeMap<MonitorState, f64> = Default::default();
                for (s, q) in dist {
                    *expected.entry(s).or_default() += q;
                }
                expected.retain(|_, q| *q > 0.0);
                let mut actual: std::collections::BTreeMap<MonitorState, f64> = Default::default();
                for &(d, q) in &row.dests {
                    *actual.entry(p.decode_dest(&c, d)).or_default() += q;
                }
                assert_eq!(expected.keys().collect::<Vec<_>>(), actual.keys().collect::<Vec<_>>());
                for (k, q) in &expected {
                    assert!((q - actual[k]).abs() < 1e-12);
                }
                let out = decision_step(m, &c, a, &mut rng).unwrap();
                c = out.next;
                st = p.decode(&c);
                assert!(expected.contains_key(&st));
            }
        }
    }

    #[test]
    fn agrees_with_direct_monitor() {
        let pda = parse_pda(EVEN).unwrap();
        agree(&corridor(), &pda, &opts(0.2), 300, 11);
        agree(&corridor(), &pda, &opts(0.0), 300, 12);
    }

    #[test]
    fn boxed_input_rejected() {
        let pda = parse_pda(EVEN).unwrap();
        let m = crate::envs::cloud_rmdp();
        assert!(matches!(pda_product(&m, &pda, &opts(0.0)), Err(TransformError::FlatModelRequired(_))));
    }
}
