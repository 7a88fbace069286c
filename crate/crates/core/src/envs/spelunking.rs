use std::collections::BTreeSet;

use super::EnvSpec;
use crate::learn::{Exploration, Hyperparameters, LearningRate};
use crate::model::{ActionId, ComponentId, NodeId, Rmdp, RmdpBuilder, VRef, Vertex};

/// The bundled 6x6 cave. An approximation of the pictured one.
pub const SPELUNKING_LAYOUT: &str = include_str!("../../data/spelunking_6x6.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tile {
    Wall,
    Floor,
    Trap,
    Hole,
    Gear,
}

#[derive(Clone, Debug, PartialEq)]
struct Level {
    tiles: Vec<Vec<Tile>>,
}

/// Two level types on a shared grid. Falling from a level of one type
/// lands on the same cell of a level of the other type.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    levels: [Level; 2],
    rows: usize,
    cols: usize,
    start: (usize, usize),
    teleports: Vec<(usize, usize)>,
}

impl Layout {
    /// Reads `type1`/`type2` blocks of equal-sized character grids.
    pub fn parse(text: &str) -> Result<Layout, String> {
        let mut blocks: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
        let mut cur = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with("# ") || line == "#" {
                continue;
            }
            match line {
                "type1" => cur = Some(0),
                "type2" => cur = Some(1),
                row => blocks[cur.ok_or("grid row before `type1`")?].push(row),
            }
        }
        let rows = blocks[0].len();
        let cols = blocks[0].first().map_or(0, |r| r.chars().count());
        if rows == 0 || cols == 0 || blocks[1].len() != rows {
            return Err("both level types need the same non-empty grid".into());
        }
        let mut start = None;
        let mut teleports = [BTreeSet::new(), BTreeSet::new()];
        let mut levels = Vec::new();
        for (t, block) in blocks.iter().enumerate() {
            let mut tiles = Vec::new();
            for (r, row) in block.iter().enumerate() {
                if row.chars().count() != cols {
                    return Err(format!("type{} row {r} has the wrong width", t + 1));
                }
                let mut line = Vec::new();
                for (c, ch) in row.chars().enumerate() {
                    line.push(match ch {
                        '#' => Tile::Wall,
                        '.' => Tile::Floor,
                        'T' => Tile::Trap,
                        'D' => Tile::Hole,
                        'E' => Tile::Gear,
                        'o' => {
                            teleports[t].insert((r, c));
                            Tile::Floor
                        }
                        'I' if t == 0 => {
                            start = Some((r, c));
                            Tile::Floor
                        }
                        other => return Err(format!("unknown tile `{other}`")),
                    });
                }
                tiles.push(line);
            }
            levels.push(Level { tiles });
        }
        if teleports[0] != teleports[1] {
            return Err("teleport targets differ between level types".into());
        }
        let walls = |l: &Level| -> Vec<Vec<bool>> { l.tiles.iter().map(|r| r.iter().map(|&t| t == Tile::Wall).collect()).collect() };
        if walls(&levels[0]) != walls(&levels[1]) {
            return Err("walls differ between level types".into());
        }
        let start = start.ok_or("type1 needs a start `I`")?;
        let teleports: Vec<(usize, usize)> = teleports[0].iter().copied().collect();
        let has_traps = levels.iter().any(|l| l.tiles.iter().flatten().any(|&t| t == Tile::Trap));
        if has_traps && teleports.is_empty() {
            return Err("traps need at least one teleport target `o`".into());
        }
        let [a, b]: [Level; 2] = levels.try_into().expect("two levels");
        Ok(Layout {
            levels: [a, b],
            rows,
            cols,
            start,
            teleports,
        })
    }

    fn tile(&self, t: usize, (r, c): (usize, usize)) -> Tile {
        self.levels[t].tiles[r][c]
    }

    fn free(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&p| self.tile(0, p) != Tile::Wall)
            .collect()
    }

    fn has_traps(&self, t: usize) -> bool {
        self.levels[t].tiles.iter().flatten().any(|&x| x == Tile::Trap)
    }

    fn holes(&self, t: usize) -> Vec<(usize, usize)> {
        self.free().into_iter().filter(|&p| self.tile(t, p) == Tile::Hole).collect()
    }

    /// Cells a level of type `t` can be left from by falling.
    fn fall_cells(&self, t: usize) -> Vec<(usize, usize)> {
        let mut s: BTreeSet<(usize, usize)> = self.holes(t).into_iter().collect();
        if self.has_traps(t) {
            s.extend(self.teleports.iter().copied());
        }
        s.into_iter().collect()
    }

    /// Cells a level of type `t` can be entered on.
    fn landings(&self, t: usize) -> Vec<(usize, usize)> {
        let mut s: BTreeSet<(usize, usize)> = self.fall_cells(1 - t).into_iter().collect();
        if t == 0 {
            s.insert(self.start);
        }
        s.into_iter().collect()
    }

    fn step(&self, (r, c): (usize, usize), dir: usize) -> (usize, usize) {
        let (dr, dc): (isize, isize) = [(-1, 0), (0, 1), (1, 0), (0, -1)][dir];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
            return (r, c);
        }
        let n = (nr as usize, nc as usize);
        if self.tile(0, n) == Tile::Wall {
            (r, c)
        } else {
            n
        }
    }
}

const MOVES: [&str; 4] = ["N", "E", "S", "W"];

fn level_name(t: usize) -> String {
    format!("L{}", t + 1)
}

fn cell((r, c): (usize, usize)) -> String {
    format!("r{r}c{c}")
}

fn state_node(t: usize, l: (usize, usize), c: (usize, usize), gear: bool) -> String {
    format!("{}.{}.{}.g{}", level_name(t), cell(l), cell(c), gear as u8)
}

fn entry_node(t: usize, c: (usize, usize)) -> String {
    format!("{}.in.{}", level_name(t), cell(c))
}

fn exit_node(t: usize) -> String {
    format!("{}.out", level_name(t))
}

fn box_name(t: usize, l: (usize, usize), f: (usize, usize)) -> String {
    format!("{}.{}.fall.{}", level_name(t), cell(l), cell(f))
}

/// Strategy class of the opening moves in the top level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyClass {
    OverTraps,
    AvoidTraps,
    Neither,
}

/// A built cave with the handles needed to read strategies off it.
#[derive(Clone, Debug)]
pub struct Spelunking {
    pub model: Rmdp,
    pub start: (ComponentId, NodeId),
    pub layout: Layout,
    pub trap_p: f64,
    pub ascend_p: f64,
}

impl Spelunking {
    /// Follows `choose` from the start through the top level, assuming every
    /// move lands where intended, until it steps onto a trap or descends a
    /// hole.
    pub fn strategy_class(&self, mut choose: impl FnMut(Vertex) -> Option<ActionId>) -> StrategyClass {
        let lay = &self.layout;
        let mut pos = lay.start;
        let mut v = Vertex::Node(self.start.1);
        for _ in 0..2 * lay.rows * lay.cols {
            let Some(a) = choose(v) else {
                return StrategyClass::Neither;
            };
            let name = self.model.action_name(a);
            if name == "down" {
                return StrategyClass::AvoidTraps;
            }
            let Some(dir) = MOVES.iter().position(|&m| m == name) else {
                return StrategyClass::Neither;
            };
            pos = lay.step(pos, dir);
            if lay.tile(0, pos) == Tile::Trap {
                return StrategyClass::OverTraps;
            }
            let n = self.model.node_by_name(&state_node(0, lay.start, pos, false)).expect("top-level node");
            v = Vertex::Node(n);
        }
        StrategyClass::Neither
    }
}

/// The bundled cave with trap and spontaneous-ascent probabilities.
pub fn spelunking_rmdp(trap_p: f64, ascend_p: f64) -> Result<Rmdp, String> {
    Ok(spelunking_with_layout(&Layout::parse(SPELUNKING_LAYOUT)?, trap_p, ascend_p)?.model)
}

/// Single-exit cave: level types `L1` and `L2` call each other.
///
/// A vertex records the landing cell, the current cell and whether the gear
/// is held. Without gear, stepping onto a trap from another cell teleports
/// the agent to a uniformly drawn teleport cell and drops it into the other
/// type with probability `trap_p`, and `down` on a hole drops it. With
/// gear, `up` on the landing cell leaves the level. Every other action first
/// leaves the level with probability `ascend_p`. Leaving returns the
/// agent, holding the gear, to the cell it fell from. Each step costs 1.
pub fn spelunking_with_layout(lay: &Layout, trap_p: f64, ascend_p: f64) -> Result<Spelunking, String> {
    if !(0.0..=1.0).contains(&trap_p) || !(0.0..=1.0).contains(&ascend_p) {
        return Err("probabilities must lie in [0, 1]".into());
    }
    let free = lay.free();
    let mut b = RmdpBuilder::new();
    for t in 0..2 {
        let comp = level_name(t);
        b.component(&comp);
        for &l in &lay.landings(t) {
            b.entry(&comp, &entry_node(t, l));
        }
        b.exit(&comp, &exit_node(t));
        for &l in &lay.landings(t) {
            for &f in &lay.fall_cells(t) {
                b.add_box(&comp, &box_name(t, l, f), &level_name(1 - t));
            }
        }
    }
    for t in 0..2 {
        let comp = level_name(t);
        let out = VRef::node(exit_node(t));
        let fall = |l, f| VRef::port(box_name(t, l, f), entry_node(1 - t, f));
        let rows = |b: &mut RmdpBuilder, src: VRef, l: (usize, usize), c: (usize, usize), gear: bool| {
            let stay = 1.0 - ascend_p;
            for (dir, name) in MOVES.iter().enumerate() {
                let to = lay.step(c, dir);
                let got = gear || lay.tile(t, to) == Tile::Gear;
                let mut dests = vec![(out.clone(), ascend_p)];
                if !gear && to != c && lay.tile(t, to) == Tile::Trap {
                    let k = lay.teleports.len() as f64;
                    for &f in &lay.teleports {
                        dests.push((fall(l, f), stay * trap_p / k));
                    }
                    dests.push((VRef::node(state_node(t, l, to, got)), stay * (1.0 - trap_p)));
                } else {
                    dests.push((VRef::node(state_node(t, l, to, got)), stay));
                }
                dests.retain(|d| d.1 > 0.0);
                b.transition(&comp, src.clone(), name, &dests, -1.0);
            }
            if !gear && lay.tile(t, c) == Tile::Hole {
                let mut dests = vec![(out.clone(), ascend_p), (fall(l, c), stay)];
                dests.retain(|d| d.1 > 0.0);
                b.transition(&comp, src.clone(), "down", &dests, -1.0);
            }
            if gear && c == l {
                b.edge(&comp, src.clone(), "up", out.clone(), -1.0);
            }
        };
        for &l in &lay.landings(t) {
            rows(&mut b, VRef::node(entry_node(t, l)), l, l, lay.tile(t, l) == Tile::Gear);
            for &c in &free {
                for gear in [false, true] {
                    rows(&mut b, VRef::node(state_node(t, l, c, gear)), l, c, gear);
                }
            }
            for &f in &lay.fall_cells(t) {
                rows(&mut b, VRef::port(box_name(t, l, f), exit_node(1 - t)), l, f, true);
            }
        }
    }
    let model = b.build_validated().map_err(|e| e.to_string())?;
    let start = (ComponentId(0), model.node_by_name(&entry_node(0, lay.start)).expect("start entry"));
    Ok(Spelunking {
        model,
        start,
        layout: lay.clone(),
        trap_p,
        ascend_p,
    })
}

/// The bundled cave at trap probability 0.5 and ascent probability 0.01.
pub fn spelunking() -> Spelunking {
    let lay = Layout::parse(SPELUNKING_LAYOUT).expect("bundled layout parses");
    spelunking_with_layout(&lay, 0.5, 0.01).expect("bundled cave builds")
}

pub fn spelunking_spec() -> EnvSpec {
    let s = spelunking();
    let mut h = Hyperparameters::new(s.start);
    h.learning_rate = LearningRate::Constant(0.2);
    h.exploration = Exploration::constant(0.1);
    h.step_cap = 2000;
    h.total_steps = 300_000;
    EnvSpec {
        name: "spelunking".into(),
        start: s.start,
        hyperparameters: h,
        params: serde_json::json!({
            "trap_p": s.trap_p,
            "ascend_p": s.ascend_p,
            "layout": "spelunking_6x6",
        }),
        model: s.model,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{solve_1exit, value_iterate_1exit};

    #[test]
    fn bundled_cave_is_single_exit_and_valid() {
        let s = spelunking();
        assert!(s.model.is_single_exit());
        assert!(s.model.validate().is_empty());
        assert_eq!(s.model.diameter(), 1.0);
    }

    #[test]
    fn trap_falls_half_the_time() {
        let s = spelunking();
        let m = &s.model;
        let v = m.vertex_by_label("L1.r0c0.r0c1.g0").unwrap();
        let row = m.row(v, m.action_by_name("E").unwrap()).unwrap();
        let fell: f64 = row
            .dests
            .iter()
            .filter(|(d, _)| matches!(d, Vertex::Call(..)))
            .map(|d| d.1)
            .sum();
        assert!((fell - 0.99 * 0.5).abs() < 1e-12);
        let v = m.vertex_by_label("L1.r0c0.r0c1.g1").unwrap();
        let row = m.row(v, m.action_by_name("E").unwrap()).unwrap();
        assert!(row.dests.iter().all(|(d, _)| !matches!(d, Vertex::Call(..))));
    }

    #[test]
    fn optimal_class_depends_on_trap_probability() {
        let lay = Layout::parse(SPELUNKING_LAYOUT).unwrap();
        for (p, want) in [(0.5, StrategyClass::OverTraps), (0.05, StrategyClass::AvoidTraps)] {
            let s = spelunking_with_layout(&lay, p, 0.01).unwrap();
            let sol = solve_1exit(&s.model).unwrap();
            assert_eq!(s.strategy_class(|v| sol.strategy.get(&v).copied()), want, "trap_p {p}");
        }
    }

    #[test]
    fn value_iteration_matches_policy_iteration() {
        let s = spelunking();
        let a = solve_1exit(&s.model).unwrap();
        let b = value_iterate_1exit(&s.model, 1.0, 1e-11, 1_000_000).unwrap();
        let v = Vertex::Node(s.start.1);
        assert!((a.value(v) - b.value(v)).abs() < 1e-7);
    }

    #[test]
    fn layout_errors() {
        assert!(Layout::parse("type1\nI.\ntype2\n.#\n").is_err());
        assert!(Layout::parse("type1\nIT\ntype2\n..\n").is_err());
        assert!(Layout::parse("type1\n..\ntype2\n..\n").is_err());
    }
}
