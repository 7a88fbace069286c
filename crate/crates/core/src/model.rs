//! The recursive MDP data model: components, boxes, ports and transition rows.
//!
//! Identifiers are interned strings. Every node, box, action and component
//! name maps to a dense integer handle owned by the [`Rmdp`] that interned it,
//! so handles from two different models must never be mixed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Tolerance used when checking that a distribution sums to one.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

macro_rules! handle {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

handle!(
    /// Index of a component, in declaration order.
    ComponentId
);
handle!(NodeId);
handle!(BoxId);
handle!(ActionId);

impl ActionId {
    /// Reserved action recorded for moves that consume no decision
    /// (entering a box, leaving through an exit).
    pub const NOOP: ActionId = ActionId(u32::MAX);
}

/// A vertex of a component: a node, a call port or a return port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    Node(NodeId),
    /// `(box, entry node of the callee)`.
    Call(BoxId, NodeId),
    /// `(box, exit node of the callee)`.
    Return(BoxId, NodeId),
}

/// Outgoing distribution and reward of one `(vertex, action)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    /// Destinations in stored order; sampling walks this order.
    pub dests: Vec<(Vertex, f64)>,
    pub reward: f64,
}

impl Row {
    pub fn deterministic(dest: Vertex, reward: f64) -> Self {
        Row { dests: vec![(dest, 1.0)], reward }
    }

    pub fn mass(&self) -> f64 {
        self.dests.iter().map(|(_, p)| p).sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Component {
    pub name: String,
    /// Declared actions `A_i`.
    pub actions: BTreeSet<ActionId>,
    /// All nodes of the component, entries and exits included.
    pub nodes: Vec<NodeId>,
    pub entries: Vec<NodeId>,
    pub exits: Vec<NodeId>,
    /// Boxes with the component each one invokes.
    pub boxes: Vec<(BoxId, ComponentId)>,
    pub transitions: BTreeMap<(Vertex, ActionId), Row>,
}

/// A recursive Markov decision process.
///
/// Immutable once built; lookup tables for box ownership and enabled actions
/// are computed at construction.
#[derive(Clone, Debug)]
pub struct Rmdp {
    components: Vec<Component>,
    node_names: Vec<String>,
    box_names: Vec<String>,
    action_names: Vec<String>,
    node_owner: HashMap<NodeId, ComponentId>,
    box_owner: HashMap<BoxId, ComponentId>,
    box_target: HashMap<BoxId, ComponentId>,
    enabled: HashMap<Vertex, Vec<ActionId>>,
}

impl Rmdp {
    /// Assembles a model from already-interned parts. No validation happens
    /// here; call [`Rmdp::validate`] for the well-formedness diagnostics.
    pub fn from_parts(
        components: Vec<Component>,
        node_names: Vec<String>,
        box_names: Vec<String>,
        action_names: Vec<String>,
    ) -> Self {
        let mut node_owner = HashMap::new();
        let mut box_owner = HashMap::new();
        let mut box_target = HashMap::new();
        let mut enabled: HashMap<Vertex, Vec<ActionId>> = HashMap::new();
        for (i, c) in components.iter().enumerate() {
            let id = ComponentId(i as u32);
            for &n in &c.nodes {
                node_owner.entry(n).or_insert(id);
            }
            for &(b, target) in &c.boxes {
                box_owner.entry(b).or_insert(id);
                box_target.entry(b).or_insert(target);
            }
            for &(v, a) in c.transitions.keys() {
                enabled.entry(v).or_default().push(a);
            }
        }
        for actions in enabled.values_mut() {
            actions.sort();
            actions.dedup();
        }
        Rmdp {
            components,
            node_names,
            box_names,
            action_names,
            node_owner,
            box_owner,
            box_target,
            enabled,
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, id: ComponentId) -> &Component {
        &self.components[id.index()]
    }

    pub fn component_ids(&self) -> impl Iterator<Item = ComponentId> {
        (0..self.components.len() as u32).map(ComponentId)
    }

    pub fn component_by_name(&self, name: &str) -> Option<ComponentId> {
        self.components
            .iter()
            .position(|c| c.name == name)
            .map(|i| ComponentId(i as u32))
    }

    pub fn node_name(&self, n: NodeId) -> &str {
        &self.node_names[n.index()]
    }

    pub fn box_name(&self, b: BoxId) -> &str {
        &self.box_names[b.index()]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        if a == ActionId::NOOP {
            "-"
        } else {
            &self.action_names[a.index()]
        }
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.node_names
            .iter()
            .position(|n| n == name)
            .map(|i| NodeId(i as u32))
    }

    pub fn box_by_name(&self, name: &str) -> Option<BoxId> {
        self.box_names
            .iter()
            .position(|n| n == name)
            .map(|i| BoxId(i as u32))
    }

    pub fn action_by_name(&self, name: &str) -> Option<ActionId> {
        self.action_names
            .iter()
            .position(|n| n == name)
            .map(|i| ActionId(i as u32))
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn box_names(&self) -> &[String] {
        &self.box_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn node_owner(&self, n: NodeId) -> Option<ComponentId> {
        self.node_owner.get(&n).copied()
    }

    pub fn box_owner(&self, b: BoxId) -> Option<ComponentId> {
        self.box_owner.get(&b).copied()
    }

    /// The component `Y(b)` invoked by box `b`.
    pub fn box_target(&self, b: BoxId) -> Option<ComponentId> {
        self.box_target.get(&b).copied()
    }

    /// The component a vertex belongs to.
    pub fn vertex_owner(&self, v: Vertex) -> Option<ComponentId> {
        match v {
            Vertex::Node(n) => self.node_owner(n),
            Vertex::Call(b, _) | Vertex::Return(b, _) => self.box_owner(b),
        }
    }

    /// Actions with a transition row at `v`, sorted by id.
    pub fn enabled_actions(&self, v: Vertex) -> &[ActionId] {
        self.enabled.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn row(&self, v: Vertex, a: ActionId) -> Option<&Row> {
        let owner = self.vertex_owner(v)?;
        self.components
            .get(owner.index())?
            .transitions
            .get(&(v, a))
    }

    pub fn is_exit(&self, n: NodeId) -> bool {
        self.node_owner(n)
            .map(|c| self.component(c).exits.contains(&n))
            .unwrap_or(false)
    }

    pub fn is_entry(&self, n: NodeId) -> bool {
        self.node_owner(n)
            .map(|c| self.component(c).entries.contains(&n))
            .unwrap_or(false)
    }

    /// Position of exit `ex` in its component's exit ordering.
    pub fn exit_index(&self, ex: NodeId) -> Option<usize> {
        let c = self.node_owner(ex)?;
        self.component(c).exits.iter().position(|&x| x == ex)
    }

    /// Vertices of a component: nodes, then call ports and return ports box
    /// by box in the callee's entry/exit order.
    pub fn vertices(&self, id: ComponentId) -> Vec<Vertex> {
        let c = self.component(id);
        let mut out: Vec<Vertex> = c.nodes.iter().map(|&n| Vertex::Node(n)).collect();
        for &(b, target) in &c.boxes {
            if let Some(callee) = self.components.get(target.index()) {
                out.extend(callee.entries.iter().map(|&en| Vertex::Call(b, en)));
                out.extend(callee.exits.iter().map(|&ex| Vertex::Return(b, ex)));
            }
        }
        out
    }

    /// Every vertex of every component, component by component.
    pub fn all_vertices(&self) -> Vec<Vertex> {
        self.component_ids().flat_map(|c| self.vertices(c)).collect()
    }

    /// Return ports of box `b` in the callee's exit order.
    pub fn return_ports(&self, b: BoxId) -> Option<Vec<Vertex>> {
        let target = self.box_target(b)?;
        Some(
            self.component(target)
                .exits
                .iter()
                .map(|&ex| Vertex::Return(b, ex))
                .collect(),
        )
    }

    /// Whether the agent chooses an action at `v`: everything except call
    /// ports and exit nodes.
    pub fn is_decision_vertex(&self, v: Vertex) -> bool {
        match v {
            Vertex::Call(..) => false,
            Vertex::Node(n) => !self.is_exit(n),
            Vertex::Return(..) => true,
        }
    }

    /// Largest absolute one-step reward.
    pub fn diameter(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.transitions.values())
            .map(|row| row.reward.abs())
            .fold(0.0, f64::max)
    }

    /// True iff every component has exactly one exit.
    pub fn is_single_exit(&self) -> bool {
        self.components.iter().all(|c| c.exits.len() == 1)
    }

    /// True iff no component declares a box.
    pub fn is_flat(&self) -> bool {
        self.components.iter().all(|c| c.boxes.is_empty())
    }

    /// Whether every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.components
            .iter()
            .flat_map(|c| c.transitions.values())
            .all(|row| row.dests.iter().filter(|(_, p)| *p > 0.0).count() <= 1)
    }

    pub fn vertex_label(&self, v: Vertex) -> String {
        match v {
            Vertex::Node(n) => self.node_name(n).to_string(),
            Vertex::Call(b, n) | Vertex::Return(b, n) => {
                format!("{}:{}", self.box_name(b), self.node_name(n))
            }
        }
    }

    /// Looks up a vertex by its label (`node` or `box:node`).
    pub fn vertex_by_label(&self, label: &str) -> Option<Vertex> {
        match label.split_once(':') {
            None => self.node_by_name(label).map(Vertex::Node),
            Some((b, n)) => {
                let b = self.box_by_name(b)?;
                let n = self.node_by_name(n)?;
                if self.is_exit(n) {
                    Some(Vertex::Return(b, n))
                } else {
                    Some(Vertex::Call(b, n))
                }
            }
        }
    }

    /// Checks every structural invariant; an empty result means well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        crate::model::validate(self)
    }

    fn name_view(&self) -> Vec<ComponentView> {
        self.components
            .iter()
            .map(|c| ComponentView {
                name: c.name.clone(),
                actions: c.actions.iter().map(|&a| self.action_name(a).to_string()).collect(),
                nodes: c.nodes.iter().map(|&n| self.node_name(n).to_string()).collect(),
                entries: c.entries.iter().map(|&n| self.node_name(n).to_string()).collect(),
                exits: c.exits.iter().map(|&n| self.node_name(n).to_string()).collect(),
                boxes: c
                    .boxes
                    .iter()
                    .map(|&(b, t)| {
                        let target = self
                            .components
                            .get(t.index())
                            .map(|c| c.name.clone())
                            .unwrap_or_else(|| format!("#{}", t.0));
                        (self.box_name(b).to_string(), target)
                    })
                    .collect(),
                transitions: c
                    .transitions
                    .iter()
                    .map(|(&(v, a), row)| {
                        let dests = row
                            .dests
                            .iter()
                            .map(|&(d, p)| (self.vertex_label(d), p.to_bits()))
                            .collect();
                        (
                            (self.vertex_label(v), self.action_name(a).to_string()),
                            (dests, row.reward.to_bits()),
                        )
                    })
                    .collect(),
            })
            .collect()
    }
}

type RowView = (Vec<(String, u64)>, u64);

#[derive(PartialEq)]
struct ComponentView {
    name: String,
    actions: BTreeSet<String>,
    nodes: BTreeSet<String>,
    entries: Vec<String>,
    exits: Vec<String>,
    boxes: BTreeMap<String, String>,
    transitions: BTreeMap<(String, String), RowView>,
}

/// Structural equality: compares names, orderings that carry meaning
/// (entries, exits, destination order) and exact floating-point bits.
/// Interning order is irrelevant.
impl PartialEq for Rmdp {
    fn eq(&self, other: &Self) -> bool {
        self.name_view() == other.name_view()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unknown box `{0}`")]
    UnknownBox(String),
    #[error("invalid identifier `{0}`")]
    InvalidName(String),
    #[error("duplicate component `{0}`")]
    DuplicateComponent(String),
    #[error("conflicting rewards for `{vertex}` under action `{action}`")]
    ConflictingReward { vertex: String, action: String },
}

/// Name-based reference to a vertex, resolved when the model is built.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VRef {
    Node(String),
    /// `(box, node)`; call or return port depending on whether the node is
    /// an exit of the box's callee.
    Port(String, String),
}

impl VRef {
    pub fn node(n: impl Into<String>) -> Self {
        VRef::Node(n.into())
    }

    pub fn port(b: impl Into<String>, n: impl Into<String>) -> Self {
        VRef::Port(b.into(), n.into())
    }

    /// Parses `node` or `box:node`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.split_once(':') {
            None if is_identifier(s) => Some(VRef::node(s)),
            Some((b, n)) if is_identifier(b) && is_identifier(n) => Some(VRef::port(b, n)),
            _ => None,
        }
    }
}

impl fmt::Display for VRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VRef::Node(n) => write!(f, "{n}"),
            VRef::Port(b, n) => write!(f, "{b}:{n}"),
        }
    }
}

/// Identifiers: ASCII letters, digits, `_` and `.`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

#[derive(Default, Clone, Debug)]
struct PendingComponent {
    name: String,
    actions: Vec<String>,
    nodes: Vec<String>,
    entries: Vec<String>,
    exits: Vec<String>,
    boxes: Vec<(String, String)>,
    rows: Vec<((VRef, String), Vec<(VRef, f64)>, f64)>,
}

/// Incremental, name-based construction of an [`Rmdp`].
///
/// Nodes are registered in a component when declared or when a transition of
/// that component mentions them. Rows for the same `(vertex, action)` added
/// twice are merged: destinations are appended in call order and the reward
/// must agree.
#[derive(Default, Clone, Debug)]
pub struct RmdpBuilder {
    components: Vec<PendingComponent>,
}

impl RmdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn comp(&mut self, name: &str) -> &mut PendingComponent {
        if let Some(i) = self.components.iter().position(|c| c.name == name) {
            &mut self.components[i]
        } else {
            self.components.push(PendingComponent {
                name: name.to_string(),
                ..Default::default()
            });
            self.components.last_mut().unwrap()
        }
    }

    /// Declares a component (idempotent). Declaration order fixes the ids.
    pub fn component(&mut self, name: &str) -> &mut Self {
        self.comp(name);
        self
    }

    pub fn has_component(&self, name: &str) -> bool {
        self.components.iter().any(|c| c.name == name)
    }

    pub fn entry(&mut self, comp: &str, node: &str) -> &mut Self {
        let c = self.comp(comp);
        c.entries.push(node.to_string());
        push_unique(&mut c.nodes, node);
        self
    }

    pub fn exit(&mut self, comp: &str, node: &str) -> &mut Self {
        let c = self.comp(comp);
        c.exits.push(node.to_string());
        push_unique(&mut c.nodes, node);
        self
    }

    pub fn node(&mut self, comp: &str, node: &str) -> &mut Self {
        push_unique(&mut self.comp(comp).nodes, node);
        self
    }

    pub fn action(&mut self, comp: &str, action: &str) -> &mut Self {
        push_unique(&mut self.comp(comp).actions, action);
        self
    }

    pub fn add_box(&mut self, comp: &str, name: &str, target: &str) -> &mut Self {
        self.comp(comp)
            .boxes
            .push((name.to_string(), target.to_string()));
        self
    }

    pub fn transition(
        &mut self,
        comp: &str,
        src: VRef,
        action: &str,
        dests: &[(VRef, f64)],
        reward: f64,
    ) -> &mut Self {
        let c = self.comp(comp);
        push_unique(&mut c.actions, action);
        for v in std::iter::once(&src).chain(dests.iter().map(|(d, _)| d)) {
            if let VRef::Node(n) = v {
                push_unique(&mut c.nodes, n);
            }
        }
        c.rows
            .push(((src, action.to_string()), dests.to_vec(), reward));
        self
    }

    /// Shorthand for a probability-one transition.
    pub fn edge(&mut self, comp: &str, src: VRef, action: &str, dst: VRef, reward: f64) -> &mut Self {
        self.transition(comp, src, action, &[(dst, 1.0)], reward)
    }

    pub fn build(&self) -> Result<Rmdp, BuildError> {
        let mut node_names = Interner::default();
        let mut box_names = Interner::default();
        let mut action_names = Interner::default();
        let mut comp_ids: HashMap<&str, ComponentId> = HashMap::new();
        for (i, c) in self.components.iter().enumerate() {
            if !is_identifier(&c.name) {
                return Err(BuildError::InvalidName(c.name.clone()));
            }
            if comp_ids.insert(&c.name, ComponentId(i as u32)).is_some() {
                return Err(BuildError::DuplicateComponent(c.name.clone()));
            }
        }
        // First pass: intern nodes, boxes and actions in declaration order.
        for c in &self.components {
            for n in &c.nodes {
                check_name(n)?;
                node_names.intern(n);
            }
            for (b, _) in &c.boxes {
                check_name(b)?;
                box_names.intern(b);
            }
            for a in &c.actions {
                check_name(a)?;
                action_names.intern(a);
            }
        }
        for c in &self.components {
            for ((src, _), dests, _) in &c.rows {
                for v in std::iter::once(src).chain(dests.iter().map(|(d, _)| d)) {
                    if let VRef::Port(b, n) = v {
                        check_name(b)?;
                        check_name(n)?;
                        if box_names.get(b).is_none() {
                            return Err(BuildError::UnknownBox(b.clone()));
                        }
                        node_names.intern(n);
                    }
                }
            }
        }
        let mut box_targets: HashMap<BoxId, ComponentId> = HashMap::new();
        let mut components = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let mut boxes = Vec::new();
            for (b, target) in &c.boxes {
                let t = *comp_ids
                    .get(target.as_str())
                    .ok_or_else(|| BuildError::UnknownComponent(target.clone()))?;
                let id = BoxId(box_names.get(b).unwrap());
                box_targets.entry(id).or_insert(t);
                boxes.push((id, t));
            }
            components.push(Component {
                name: c.name.clone(),
                actions: c
                    .actions
                    .iter()
                    .map(|a| ActionId(action_names.get(a).unwrap()))
                    .collect(),
                nodes: c.nodes.iter().map(|n| NodeId(node_names.get(n).unwrap())).collect(),
                entries: c.entries.iter().map(|n| NodeId(node_names.get(n).unwrap())).collect(),
                exits: c.exits.iter().map(|n| NodeId(node_names.get(n).unwrap())).collect(),
                boxes,
                transitions: BTreeMap::new(),
            });
        }
        let exit_sets: Vec<BTreeSet<NodeId>> = components
            .iter()
            .map(|c| c.exits.iter().copied().collect())
            .collect();
        let resolve = |v: &VRef| -> Vertex {
            match v {
                VRef::Node(n) => Vertex::Node(NodeId(node_names.get(n).unwrap())),
                VRef::Port(b, n) => {
                    let b = BoxId(box_names.get(b).unwrap());
                    let n = NodeId(node_names.get(n).unwrap());
                    let is_exit = box_targets
                        .get(&b)
                        .and_then(|t| exit_sets.get(t.index()))
                        .is_some_and(|s| s.contains(&n));
                    if is_exit {
                        Vertex::Return(b, n)
                    } else {
                        Vertex::Call(b, n)
                    }
                }
            }
        };
        for (ci, c) in self.components.iter().enumerate() {
            let mut transitions: BTreeMap<(Vertex, ActionId), Row> = BTreeMap::new();
            for ((src, action), dests, reward) in &c.rows {
                let key = (resolve(src), ActionId(action_names.get(action).unwrap()));
                let resolved: Vec<(Vertex, f64)> =
                    dests.iter().map(|(d, p)| (resolve(d), *p)).collect();
                match transitions.get_mut(&key) {
                    Some(row) => {
                        if row.reward.to_bits() != reward.to_bits() {
                            return Err(BuildError::ConflictingReward {
                                vertex: src.to_string(),
                                action: action.clone(),
                            });
                        }
                        row.dests.extend(resolved);
                    }
                    None => {
                        transitions.insert(
                            key,
                            Row {
                                dests: resolved,
                                reward: *reward,
                            },
                        );
                    }
                }
            }
            components[ci].transitions = transitions;
        }
        Ok(Rmdp::from_parts(
            components,
            node_names.names,
            box_names.names,
            action_names.names,
        ))
    }

    /// Builds and validates in one go.
    pub fn build_validated(&self) -> Result<Rmdp, ModelError> {
        let m = self.build()?;
        let diagnostics = m.validate();
        if diagnostics.is_empty() {
            Ok(m)
        } else {
            Err(ModelError::Invalid(diagnostics))
        }
    }
}

fn check_name(s: &str) -> Result<(), BuildError> {
    if is_identifier(s) {
        Ok(())
    } else {
        Err(BuildError::InvalidName(s.to_string()))
    }
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

#[derive(Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), i);
        i
    }

    fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("model is invalid: {}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// The well-formedness rule a [`Diagnostic`] reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    BoxTargetOutOfRange,
    NodeSharedAcrossComponents,
    BoxSharedAcrossComponents,
    EntryIsExit,
    EntryNotNode,
    ExitNotNode,
    DuplicateEntryOrExit,
    SourceInExit,
    SourceIsCallPort,
    DestinationIsEntry,
    DestinationIsReturnPort,
    ForeignVertex,
    BadCallPort,
    BadReturnPort,
    UndeclaredAction,
    EmptyDistribution,
    ProbabilityOutOfRange,
    NonNormalized,
    NonFiniteReward,
    DeadEnd,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::BoxTargetOutOfRange => "box-target-out-of-range",
            Rule::NodeSharedAcrossComponents => "node-shared",
            Rule::BoxSharedAcrossComponents => "box-shared",
            Rule::EntryIsExit => "entry-is-exit",
            Rule::EntryNotNode => "entry-not-node",
            Rule::ExitNotNode => "exit-not-node",
            Rule::DuplicateEntryOrExit => "duplicate-entry-or-exit",
            Rule::SourceInExit => "source-in-exit",
            Rule::SourceIsCallPort => "source-is-call-port",
            Rule::DestinationIsEntry => "destination-is-entry",
            Rule::DestinationIsReturnPort => "destination-is-return-port",
            Rule::ForeignVertex => "foreign-vertex",
            Rule::BadCallPort => "bad-call-port",
            Rule::BadReturnPort => "bad-return-port",
            Rule::UndeclaredAction => "undeclared-action",
            Rule::EmptyDistribution => "empty-distribution",
            Rule::ProbabilityOutOfRange => "probability-out-of-range",
            Rule::NonNormalized => "non-normalized",
            Rule::NonFiniteReward => "non-finite-reward",
            Rule::DeadEnd => "dead-end",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagnostic {
    pub component: String,
    pub vertex: Option<String>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.vertex {
            Some(v) => write!(f, "[{}] {} at {}: {}", self.rule, self.component, v, self.message),
            None => write!(f, "[{}] {}: {}", self.rule, self.component, self.message),
        }
    }
}

fn validate(m: &Rmdp) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let k = m.components.len();
    let mut push = |c: &Component, vertex: Option<String>, rule: Rule, message: String| {
        out.push(Diagnostic {
            component: c.name.clone(),
            vertex,
            rule,
            message,
        });
    };

    let mut seen_nodes: HashMap<NodeId, &str> = HashMap::new();
    let mut seen_boxes: HashMap<BoxId, &str> = HashMap::new();
    for c in &m.components {
        for &n in &c.nodes {
            if let Some(other) = seen_nodes.insert(n, &c.name) {
                if other != c.name {
                    push(
                        c,
                        Some(m.node_name(n).to_string()),
                        Rule::NodeSharedAcrossComponents,
                        format!("node also declared in component {other}"),
                    );
                }
            }
        }
        for &(b, target) in &c.boxes {
            if let Some(other) = seen_boxes.insert(b, &c.name) {
                push(
                    c,
                    Some(m.box_name(b).to_string()),
                    Rule::BoxSharedAcrossComponents,
                    format!("box also declared in component {other}"),
                );
            }
            if target.index() >= k {
                push(
                    c,
                    Some(m.box_name(b).to_string()),
                    Rule::BoxTargetOutOfRange,
                    format!("box maps to component #{} but only {k} exist", target.0),
                );
            }
        }
    }

    for (ci, c) in m.components.iter().enumerate() {
        let cid = ComponentId(ci as u32);
        let nodes: BTreeSet<NodeId> = c.nodes.iter().copied().collect();
        let entries: BTreeSet<NodeId> = c.entries.iter().copied().collect();
        let exits: BTreeSet<NodeId> = c.exits.iter().copied().collect();
        let boxes: HashMap<BoxId, ComponentId> = c.boxes.iter().copied().collect();
        if entries.len() != c.entries.len() || exits.len() != c.exits.len() {
            push(c, None, Rule::DuplicateEntryOrExit, "entry or exit listed twice".into());
        }
        for &n in entries.intersection(&exits) {
            push(
                c,
                Some(m.node_name(n).to_string()),
                Rule::EntryIsExit,
                "node is both an entry and an exit".into(),
            );
        }
        for &n in &entries {
            if !nodes.contains(&n) {
                push(c, Some(m.node_name(n).to_string()), Rule::EntryNotNode, "entry is not a node".into());
            }
        }
        for &n in &exits {
            if !nodes.contains(&n) {
                push(c, Some(m.node_name(n).to_string()), Rule::ExitNotNode, "exit is not a node".into());
            }
        }

        // Port sanity and ownership of a vertex referenced from this component.
        let callee = |b: BoxId| boxes.get(&b).and_then(|t| m.components.get(t.index()));
        let check_vertex = |v: Vertex, push: &mut dyn FnMut(Option<String>, Rule, String)| -> bool {
            let label = Some(m.vertex_label(v));
            match v {
                Vertex::Node(n) => {
                    if !nodes.contains(&n) {
                        push(label, Rule::ForeignVertex, "node does not belong to this component".into());
                        return false;
                    }
                }
                Vertex::Call(b, en) => match callee(b) {
                    None => {
                        push(label, Rule::ForeignVertex, "box does not belong to this component".into());
                        return false;
                    }
                    Some(t) => {
                        if !t.entries.contains(&en) {
                            push(label, Rule::BadCallPort, format!("not an entry of {}", t.name));
                            return false;
                        }
                    }
                },
                Vertex::Return(b, ex) => match callee(b) {
                    None => {
                        push(label, Rule::ForeignVertex, "box does not belong to this component".into());
                        return false;
                    }
                    Some(t) => {
                        if !t.exits.contains(&ex) {
                            push(label, Rule::BadReturnPort, format!("not an exit of {}", t.name));
                            return false;
                        }
                    }
                },
            }
            true
        };

        let mut local: Vec<(Option<String>, Rule, String)> = Vec::new();
        let mut sink = |v: Option<String>, r: Rule, s: String| local.push((v, r, s));
        for (&(src, a), row) in &c.transitions {
            let label = Some(m.vertex_label(src));
            if !c.actions.contains(&a) {
                sink(label.clone(), Rule::UndeclaredAction, format!("action {} not declared", m.action_name(a)));
            }
            if check_vertex(src, &mut sink) {
                match src {
                    Vertex::Node(n) if exits.contains(&n) => {
                        sink(label.clone(), Rule::SourceInExit, "transition leaves an exit node".into())
                    }
                    Vertex::Call(..) => {
                        sink(label.clone(), Rule::SourceIsCallPort, "transition leaves a call port".into())
                    }
                    _ => {}
                }
            }
            if !row.reward.is_finite() {
                sink(label.clone(), Rule::NonFiniteReward, format!("reward {}", row.reward));
            }
            if row.dests.is_empty() {
                sink(label.clone(), Rule::EmptyDistribution, format!("action {} has no destinations", m.action_name(a)));
                continue;
            }
            let mut bad_prob = false;
            for &(d, p) in &row.dests {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    bad_prob = true;
                }
                if check_vertex(d, &mut sink) {
                    match d {
                        Vertex::Node(n) if entries.contains(&n) => sink(
                            Some(m.vertex_label(d)),
                            Rule::DestinationIsEntry,
                            format!("entry node reached from {}", m.vertex_label(src)),
                        ),
                        Vertex::Return(..) => sink(
                            Some(m.vertex_label(d)),
                            Rule::DestinationIsReturnPort,
                            format!("return port reached from {}", m.vertex_label(src)),
                        ),
                        _ => {}
                    }
                }
            }
            if bad_prob {
                sink(label.clone(), Rule::ProbabilityOutOfRange, format!("action {} has a probability outside [0,1]", m.action_name(a)));
            }
            let mass = row.mass();
            if (mass - 1.0).abs() > PROBABILITY_TOLERANCE {
                sink(label.clone(), Rule::NonNormalized, format!("action {} sums to {mass}", m.action_name(a)));
            }
        }

        // Every vertex where the agent must act needs at least one action.
        let enabled: BTreeSet<Vertex> = c.transitions.keys().map(|&(v, _)| v).collect();
        for &n in &c.nodes {
            if !exits.contains(&n) && !enabled.contains(&Vertex::Node(n)) {
                sink(Some(m.node_name(n).to_string()), Rule::DeadEnd, "non-exit node without actions".into());
            }
        }
        for &(b, t) in &c.boxes {
            if let Some(t) = m.components.get(t.index()) {
                for &ex in &t.exits {
                    let v = Vertex::Return(b, ex);
                    if !enabled.contains(&v) {
                        sink(Some(m.vertex_label(v)), Rule::DeadEnd, "return port without actions".into());
                    }
                }
            }
        }
        let _ = cid;
        for (v, r, s) in local {
            push(c, v, r, s);
        }
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> RmdpBuilder {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex");
        b.edge("C", VRef::node("en"), "a", VRef::node("ex"), 5.0);
        b
    }

    #[test]
    fn toy_is_valid_single_exit() {
        let m = toy().build().unwrap();
        assert!(m.validate().is_empty());
        assert!(m.is_single_exit());
        assert_eq!(m.diameter(), 5.0);
    }

    #[test]
    fn transition_out_of_exit_is_reported() {
        let mut b = toy();
        b.node("C", "x");
        b.edge("C", VRef::node("ex"), "a", VRef::node("x"), 0.0);
        b.edge("C", VRef::node("x"), "a", VRef::node("ex"), 0.0);
        let d = b.build().unwrap().validate();
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].rule, Rule::SourceInExit);
        assert_eq!(d[0].component, "C");
        assert_eq!(d[0].vertex.as_deref(), Some("ex"));
    }

    #[test]
    fn non_normalized_distribution_is_reported() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex").node("C", "x");
        b.transition(
            "C",
            VRef::node("en"),
            "a",
            &[(VRef::node("ex"), 0.5), (VRef::node("x"), 0.4)],
            0.0,
        );
        b.edge("C", VRef::node("x"), "a", VRef::node("ex"), 0.0);
        let d = b.build().unwrap().validate();
        assert_eq!(d.iter().map(|d| d.rule).collect::<Vec<_>>(), vec![Rule::NonNormalized]);
    }

    #[test]
    fn zero_rewards_have_zero_diameter() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex");
        b.edge("C", VRef::node("en"), "a", VRef::node("ex"), 0.0);
        assert_eq!(b.build().unwrap().diameter(), 0.0);
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex");
        b.edge("C", VRef::node("en"), "a", VRef::node("ex"), -1.5);
        assert_eq!(b.build().unwrap().diameter(), 1.5);
    }

    #[test]
    fn port_and_domain_rules() {
        let mut b = RmdpBuilder::new();
        b.entry("C", "en").exit("C", "ex").add_box("C", "bx", "C");
        // Destination is an entry; port to a non-entry/non-exit node; edge into a return port.
        b.node("C", "mid");
        b.edge("C", VRef::node("en"), "a", VRef::node("mid"), 0.0);
        b.edge("C", VRef::node("mid"), "a", VRef::node("en"), 0.0);
        b.edge("C", VRef::node("mid"), "b", VRef::port("bx", "mid"), 0.0);
        b.edge("C", VRef::node("mid"), "c", VRef::port("bx", "ex"), 0.0);
        b.edge("C", VRef::port("bx", "ex"), "a", VRef::node("ex"), 0.0);
        let rules: BTreeSet<Rule> = b.build().unwrap().validate().iter().map(|d| d.rule).collect();
        assert!(rules.contains(&Rule::DestinationIsEntry));
        assert!(rules.contains(&Rule::BadCallPort));
        assert!(rules.contains(&Rule::DestinationIsReturnPort));
    }

    #[test]
    fn shared_nodes_and_out_of_range_targets() {
        let mut b = RmdpBuilder::new();
        b.entry("A", "en").exit("A", "ex");
        b.edge("A", VRef::node("en"), "a", VRef::node("ex"), 0.0);
        b.entry("B", "en2").exit("B", "ex");
        b.edge("B", VRef::node("en2"), "a", VRef::node("ex"), 0.0);
        let m = b.build().unwrap();
        let d = m.validate();
        assert!(d.iter().any(|d| d.rule == Rule::NodeSharedAcrossComponents));

        let mut comps = toy().build().unwrap().components().to_vec();
        comps[0].boxes.push((BoxId(0), ComponentId(7)));
        let m = Rmdp::from_parts(comps, vec!["en".into(), "ex".into()], vec!["b".into()], vec!["a".into()]);
        assert!(m.validate().iter().any(|d| d.rule == Rule::BoxTargetOutOfRange));
    }

    #[test]
    fn vertex_enumeration_counts_ports() {
        let mut b = RmdpBuilder::new();
        b.entry("A", "a_en").exit("A", "a_x1").exit("A", "a_x2");
        b.edge("A", VRef::node("a_en"), "go", VRef::node("a_x1"), 0.0);
        b.entry("B", "b_en").exit("B", "b_ex").add_box("B", "k1", "A").add_box("B", "k2", "A");
        b.edge("B", VRef::node("b_en"), "go", VRef::port("k1", "a_en"), 0.0);
        for k in ["k1", "k2"] {
            for x in ["a_x1", "a_x2"] {
                b.edge("B", VRef::port(k, x), "go", VRef::node("b_ex"), 0.0);
            }
        }
        b.edge("B", VRef::port("k1", "a_x1"), "alt", VRef::port("k2", "a_en"), 0.0);
        let m = b.build().unwrap();
        assert!(m.validate().is_empty(), "{:?}", m.validate());
        let bid = m.component_by_name("B").unwrap();
        // |N| + sum over boxes of (|En| + |Ex|) = 2 + 2 * (1 + 2)
        assert_eq!(m.vertices(bid).len(), 8);
        let k1 = m.box_by_name("k1").unwrap();
        let calls: Vec<_> = m
            .vertices(bid)
            .into_iter()
            .filter(|v| matches!(v, Vertex::Call(b, _) if *b == k1))
            .collect();
        assert_eq!(calls, vec![Vertex::Call(k1, m.node_by_name("a_en").unwrap())]);
    }

    #[test]
    fn validate_is_idempotent() {
        let mut b = toy();
        b.node("C", "dangling");
        let m = b.build().unwrap();
        assert_eq!(m.validate(), m.validate());
        assert_eq!(m.validate()[0].rule, Rule::DeadEnd);
    }

    #[test]
    fn conflicting_rewards_rejected_by_builder() {
        let mut b = toy();
        b.node("C", "x");
        b.transition("C", VRef::node("en"), "b", &[(VRef::node("x"), 0.5)], 1.0);
        b.transition("C", VRef::node("en"), "b", &[(VRef::node("ex"), 0.5)], 2.0);
        assert!(matches!(b.build(), Err(BuildError::ConflictingReward { .. })));
    }

    #[test]
    fn structural_equality_ignores_interning_order() {
        let mut a = RmdpBuilder::new();
        a.entry("C", "en").exit("C", "ex").node("C", "z");
        a.edge("C", VRef::node("z"), "q", VRef::node("ex"), 1.0);
        a.edge("C", VRef::node("en"), "p", VRef::node("z"), 0.0);
        let mut b = RmdpBuilder::new();
        b.node("C", "z").entry("C", "en").exit("C", "ex");
        b.edge("C", VRef::node("en"), "p", VRef::node("z"), 0.0);
        b.edge("C", VRef::node("z"), "q", VRef::node("ex"), 1.0);
        assert_eq!(a.build().unwrap(), b.build().unwrap());
        b.edge("C", VRef::node("z"), "r", VRef::node("ex"), 1.0);
        assert_ne!(a.build().unwrap(), b.build().unwrap());
    }
}
