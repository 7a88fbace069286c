use std::collections::HashMap;

use crate::model::{ActionId, Rmdp, Vertex};

/// A quantized exit-value vector: coordinate `i` is `key[i] * resolution`.
pub type VKey = Vec<i64>;

fn round_half_away(t: f64) -> f64 {
    // Division by a decimal resolution lands a hair below exact halves
    // (0.0005 / 0.001 < 0.5), so treat anything within 1e-9 as a tie.
    let a = t.abs();
    let floor = a.floor();
    let n = if a - floor >= 0.5 - 1e-9 { floor + 1.0 } else { floor };
    n.copysign(t)
}

fn inverse(resolution: f64) -> Option<f64> {
    let inv = 1.0 / resolution;
    let r = inv.round();
    ((inv - r).abs() < 1e-9 * r.max(1.0)).then_some(r)
}

/// Rounds every coordinate to the nearest multiple of `resolution`, ties away
/// from zero.
pub fn quantize(values: &[f64], resolution: f64) -> Vec<f64> {
    let key = quantize_key(values, resolution);
    match inverse(resolution) {
        Some(inv) => key.iter().map(|&n| n as f64 / inv).collect(),
        None => key.iter().map(|&n| n as f64 * resolution).collect(),
    }
}

pub fn quantize_key(values: &[f64], resolution: f64) -> VKey {
    let inv = inverse(resolution);
    values
        .iter()
        .map(|&x| {
            let t = match inv {
                Some(inv) => x * inv,
                None => x / resolution,
            };
            round_half_away(t) as i64
        })
        .collect()
}

/// How table keys are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keying {
    /// `(vertex, quantized exit-value vector)`.
    ExitValues,
    /// Vertex only; the key vector is always empty.
    VertexOnly,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Slot {
    q: Vec<f64>,
    visits: Vec<u64>,
}

/// Q-values per `(vertex, exit-value key)`, one entry per enabled action in
/// ascending action-id order.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub keying: Keying,
    pub resolution: f64,
    pub initial: f64,
    slots: HashMap<(Vertex, VKey), Slot>,
}

impl QTable {
    pub fn new(keying: Keying, resolution: f64, initial: f64) -> Self {
        QTable {
            keying,
            resolution,
            initial,
            slots: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Coordinate `k` of the exit-value vector a key stands for.
    pub fn key_value(&self, key: &VKey, k: usize) -> f64 {
        match key.get(k) {
            None => 0.0,
            Some(&n) => match inverse(self.resolution) {
                Some(inv) => n as f64 / inv,
                None => n as f64 * self.resolution,
            },
        }
    }

    pub fn get(&self, m: &Rmdp, v: Vertex, key: &VKey, a: ActionId) -> f64 {
        let Some(i) = m.enabled_actions(v).iter().position(|&x| x == a) else {
            return self.initial;
        };
        self.slots
            .get(&(v, key.clone()))
            .map(|s| s.q[i])
            .unwrap_or(self.initial)
    }

    /// `max_a Q(v, key, a)`; the initial value for unseen keys.
    pub fn max(&self, v: Vertex, key: &VKey) -> f64 {
        match self.slots.get(&(v, key.clone())) {
            Some(s) if !s.q.is_empty() => s.q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            _ => self.initial,
        }
    }

    /// Index into the enabled actions of the greedy choice; ties go to the
    /// smallest action id.
    pub fn argmax_index(&self, v: Vertex, key: &VKey) -> usize {
        match self.slots.get(&(v, key.clone())) {
            None => 0,
            Some(s) => {
                let mut best = 0;
                for i in 1..s.q.len() {
                    if s.q[i] > s.q[best] {
                        best = i;
                    }
                }
                best
            }
        }
    }

    pub fn argmax(&self, m: &Rmdp, v: Vertex, key: &VKey) -> Option<ActionId> {
        m.enabled_actions(v).get(self.argmax_index(v, key)).copied()
    }

    /// Bumps the visit count of `(v, key, action index)` and returns it.
    pub(crate) fn visit(&mut self, m: &Rmdp, v: Vertex, key: &VKey, i: usize) -> u64 {
        let slot = self.slot_mut(m, v, key);
        slot.visits[i] += 1;
        slot.visits[i]
    }

    pub(crate) fn update(&mut self, m: &Rmdp, v: Vertex, key: &VKey, i: usize, alpha: f64, target: f64) {
        let slot = self.slot_mut(m, v, key);
        slot.q[i] = (1.0 - alpha) * slot.q[i] + alpha * target;
    }

    fn slot_mut(&mut self, m: &Rmdp, v: Vertex, key: &VKey) -> &mut Slot {
        let initial = self.initial;
        self.slots.entry((v, key.clone())).or_insert_with(|| {
            let n = m.enabled_actions(v).len();
            Slot {
                q: vec![initial; n],
                visits: vec![0; n],
            }
        })
    }

    pub fn set(&mut self, m: &Rmdp, v: Vertex, key: &VKey, a: ActionId, value: f64) {
        if let Some(i) = m.enabled_actions(v).iter().position(|&x| x == a) {
            self.slot_mut(m, v, key).q[i] = value;
        }
    }

    /// All entries as `(vertex, key, action, value)`, sorted for stable output.
    pub fn entries(&self, m: &Rmdp) -> Vec<(Vertex, VKey, ActionId, f64)> {
        let mut out: Vec<_> = self
            .slots
            .iter()
            .flat_map(|((v, k), s)| {
                m.enabled_actions(*v)
                    .iter()
                    .zip(&s.q)
                    .map(move |(&a, &q)| (*v, k.clone(), a, q))
            })
            .collect();
        out.sort_by(|x, y| (x.0, &x.1, x.2).cmp(&(y.0, &y.1, y.2)));
        out
    }

    /// Human-readable dump, one entry per line.
    pub fn dump(&self, m: &Rmdp) -> String {
        let mut out = String::from("vertex\tkey\taction\tq\n");
        for (v, k, a, q) in self.entries(m) {
            let key: Vec<String> = k.iter().map(|n| n.to_string()).collect();
            out.push_str(&format!(
                "{}\t[{}]\t{}\t{:?}\n",
                m.vertex_label(v),
                key.join(","),
                m.action_name(a),
                q
            ));
        }
        out
    }
}
