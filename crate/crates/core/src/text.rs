//! The `.rmdp` text format.
//!
//! ```text
//! rmdp 1
//! # comment
//! component S
//!   entry u3
//!   exit u4
//!   node x
//!   actions f r
//!   box b5 : S
//!   u3 --f, p=0.4, r=-1--> b5:u3
//!   u3 --f, p=0.6--> u4
//!   b5:u4 --next--> u4
//! end
//! ```
//!
//! `p` defaults to 1 and `r` to 0. Lines sharing a source and an action form
//! one distribution, in the order written. A reward may appear on any line of
//! the group; explicit values must agree.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{is_identifier, BuildError, Diagnostic, Rmdp, RmdpBuilder, VRef, Vertex};

pub const HEADER: &str = "rmdp 1";

#[derive(Debug, Clone, PartialEq)]
pub struct LocatedDiagnostic {
    pub line: Option<usize>,
    pub diagnostic: Diagnostic,
}

impl fmt::Display for LocatedDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.diagnostic),
            None => write!(f, "{}", self.diagnostic),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: syntax error, expected {expected}")]
    Syntax { line: usize, expected: String },
    #[error("line {line}: {source}")]
    Build { line: usize, source: BuildError },
    #[error("invalid model:\n{}", join_lines(.0))]
    Validation(Vec<LocatedDiagnostic>),
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { line, .. } | ParseError::Build { line, .. } => Some(*line),
            ParseError::Validation(d) => d.iter().find_map(|d| d.line),
        }
    }
}

fn join_lines(d: &[LocatedDiagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

fn syntax(line: usize, expected: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        expected: expected.into(),
    }
}

struct Group {
    component: String,
    src: VRef,
    action: String,
    dests: Vec<(VRef, f64)>,
    reward: Option<f64>,
}

/// Parses and validates a model.
pub fn parse(text: &str) -> Result<Rmdp, ParseError> {
    let (builder, lines) = parse_unvalidated(text)?;
    let m = builder.build().map_err(|e| ParseError::Build {
        line: lines.fallback_line(&e),
        source: e,
    })?;
    let diagnostics = m.validate();
    if diagnostics.is_empty() {
        return Ok(m);
    }
    Err(ParseError::Validation(
        diagnostics
            .into_iter()
            .map(|d| LocatedDiagnostic {
                line: lines.locate(&d),
                diagnostic: d,
            })
            .collect(),
    ))
}

#[derive(Default)]
struct LineIndex {
    components: HashMap<String, usize>,
    /// `(component, vertex)` to the first transition leaving it.
    sources: HashMap<(String, String), usize>,
    /// `(component, vertex or box label)` to the first line mentioning it.
    vertices: HashMap<(String, String), usize>,
    box_targets: HashMap<String, usize>,
}

impl LineIndex {
    fn locate(&self, d: &Diagnostic) -> Option<usize> {
        let key = d.vertex.as_ref().map(|v| (d.component.clone(), v.clone()));
        key.as_ref()
            .and_then(|k| self.sources.get(k).or_else(|| self.vertices.get(k)))
            .or_else(|| self.components.get(&d.component))
            .copied()
    }

    fn fallback_line(&self, e: &BuildError) -> usize {
        match e {
            BuildError::UnknownComponent(c) => self.box_targets.get(c).copied().unwrap_or(1),
            BuildError::DuplicateComponent(c) => self.components.get(c).copied().unwrap_or(1),
            _ => 1,
        }
    }
}

fn parse_unvalidated(text: &str) -> Result<(RmdpBuilder, LineIndex), ParseError> {
    let mut b = RmdpBuilder::new();
    let mut idx = LineIndex::default();
    let mut seen_header = false;
    let mut current: Option<String> = None;
    let mut groups: Vec<Group> = Vec::new();
    let mut group_index: HashMap<(String, VRef, String), usize> = HashMap::new();
    let mut boxes_in: HashMap<String, BTreeSet<String>> = HashMap::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if !seen_header {
            if line.split_whitespace().collect::<Vec<_>>() != ["rmdp", "1"] {
                return Err(syntax(line_no, "header `rmdp 1`"));
            }
            seen_header = true;
            continue;
        }
        let Some(comp) = current.clone() else {
            let mut words = line.split_whitespace();
            match (words.next(), words.next(), words.next()) {
                (Some("component"), Some(name), None) if is_identifier(name) => {
                    if b.has_component(name) && idx.components.contains_key(name) {
                        return Err(ParseError::Build {
                            line: line_no,
                            source: BuildError::DuplicateComponent(name.to_string()),
                        });
                    }
                    b.component(name);
                    idx.components.insert(name.to_string(), line_no);
                    current = Some(name.to_string());
                    continue;
                }
                _ => return Err(syntax(line_no, "`component <name>`")),
            }
        };

        if line.contains("--") {
            let g = parse_transition(line, line_no)?;
            let (src, action, dest, p, r) = g;
            for v in [&src, &dest] {
                if let VRef::Port(bx, _) = v {
                    if !boxes_in.get(&comp).is_some_and(|s| s.contains(bx)) {
                        return Err(ParseError::Build {
                            line: line_no,
                            source: BuildError::UnknownBox(bx.clone()),
                        });
                    }
                }
                idx.vertices
                    .entry((comp.clone(), v.to_string()))
                    .or_insert(line_no);
            }
            idx.sources
                .entry((comp.clone(), src.to_string()))
                .or_insert(line_no);
            let key = (comp.clone(), src.clone(), action.clone());
            match group_index.get(&key) {
                Some(&gi) => {
                    let grp = &mut groups[gi];
                    if let Some(r) = r {
                        match grp.reward {
                            Some(prev) if prev.to_bits() != r.to_bits() => {
                                return Err(ParseError::Build {
                                    line: line_no,
                                    source: BuildError::ConflictingReward {
                                        vertex: src.to_string(),
                                        action,
                                    },
                                })
                            }
                            _ => grp.reward = Some(r),
                        }
                    }
                    grp.dests.push((dest, p));
                }
                None => {
                    group_index.insert(key, groups.len());
                    groups.push(Group {
                        component: comp.clone(),
                        src,
                        action,
                        dests: vec![(dest, p)],
                        reward: r,
                    });
                }
            }
            continue;
        }

        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        let rest: Vec<&str> = words.collect();
        match keyword {
            "end" if rest.is_empty() => current = None,
            "entry" | "exit" if rest.len() == 1 && is_identifier(rest[0]) => {
                if keyword == "entry" {
                    b.entry(&comp, rest[0]);
                } else {
                    b.exit(&comp, rest[0]);
                }
                idx.vertices
                    .entry((comp.clone(), rest[0].to_string()))
                    .or_insert(line_no);
            }
            "node" if !rest.is_empty() && rest.iter().all(|n| is_identifier(n)) => {
                for n in rest {
                    b.node(&comp, n);
                    idx.vertices.entry((comp.clone(), n.to_string())).or_insert(line_no);
                }
            }
            "actions" if rest.iter().all(|n| is_identifier(n)) => {
                for a in rest {
                    b.action(&comp, a);
                }
            }
            "box" if rest.len() == 3 && rest[1] == ":" && is_identifier(rest[0]) && is_identifier(rest[2]) => {
                b.add_box(&comp, rest[0], rest[2]);
                boxes_in.entry(comp.clone()).or_default().insert(rest[0].to_string());
                idx.vertices
                    .entry((comp.clone(), rest[0].to_string()))
                    .or_insert(line_no);
                idx.box_targets.entry(rest[2].to_string()).or_insert(line_no);
            }
            _ => {
                return Err(syntax(
                    line_no,
                    "`entry`, `exit`, `node`, `actions`, `box <name> : <component>`, a transition or `end`",
                ))
            }
        }
    }
    if !seen_header {
        return Err(syntax(last_line.max(1), "header `rmdp 1`"));
    }
    if current.is_some() {
        return Err(syntax(last_line, "`end`"));
    }
    for g in groups {
        b.transition(&g.component, g.src, &g.action, &g.dests, g.reward.unwrap_or(0.0));
    }
    Ok((b, idx))
}

type TransitionLine = (VRef, String, VRef, f64, Option<f64>);

fn parse_transition(line: &str, line_no: usize) -> Result<TransitionLine, ParseError> {
    let expected = "`<src> --<action>[, p=<prob>][, r=<reward>]--> <dst>`";
    let open = line.find("--").ok_or_else(|| syntax(line_no, expected))?;
    let close = line.rfind("-->").ok_or_else(|| syntax(line_no, expected))?;
    if close < open + 2 {
        return Err(syntax(line_no, expected));
    }
    let src = VRef::parse(line[..open].trim()).ok_or_else(|| syntax(line_no, "source vertex"))?;
    let dst = VRef::parse(line[close + 3..].trim()).ok_or_else(|| syntax(line_no, "destination vertex"))?;
    let mut parts = line[open + 2..close].split(',').map(str::trim);
    let action = parts.next().unwrap_or("");
    if !is_identifier(action) {
        return Err(syntax(line_no, "action name"));
    }
    let mut p = None;
    let mut r = None;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| syntax(line_no, "`p=<prob>` or `r=<reward>`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| syntax(line_no, "a decimal number"))?;
        let slot = match key.trim() {
            "p" => &mut p,
            "r" => &mut r,
            _ => return Err(syntax(line_no, "`p` or `r`")),
        };
        if slot.replace(value).is_some() {
            return Err(syntax(line_no, "each of `p` and `r` at most once"));
        }
    }
    Ok((src, action.to_string(), dst, p.unwrap_or(1.0), r))
}

fn ref_of(m: &Rmdp, v: Vertex) -> String {
    m.vertex_label(v)
}

/// Canonical text: components in id order, names sorted, destination order
/// as stored. Floats use the shortest representation that parses back to
/// the same bits.
pub fn serialize(m: &Rmdp) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for c in m.components() {
        let _ = writeln!(out, "\ncomponent {}", c.name);
        for &n in &c.entries {
            let _ = writeln!(out, "  entry {}", m.node_name(n));
        }
        for &n in &c.exits {
            let _ = writeln!(out, "  exit {}", m.node_name(n));
        }
        let mut others: Vec<&str> = c
            .nodes
            .iter()
            .filter(|n| !c.entries.contains(n) && !c.exits.contains(n))
            .map(|&n| m.node_name(n))
            .collect();
        others.sort_unstable();
        if !others.is_empty() {
            let _ = writeln!(out, "  node {}", others.join(" "));
        }
        let mut actions: Vec<&str> = c.actions.iter().map(|&a| m.action_name(a)).collect();
        actions.sort_unstable();
        if !actions.is_empty() {
            let _ = writeln!(out, "  actions {}", actions.join(" "));
        }
        let mut boxes: Vec<(&str, &str)> = c
            .boxes
            .iter()
            .map(|&(b, t)| {
                let target = m
                    .components()
                    .get(t.index())
                    .map(|c| c.name.as_str())
                    .unwrap_or("?");
                (m.box_name(b), target)
            })
            .collect();
        boxes.sort_unstable();
        for (b, t) in boxes {
            let _ = writeln!(out, "  box {b} : {t}");
        }
        let mut rows: Vec<(String, &str, &crate::model::Row)> = c
            .transitions
            .iter()
            .map(|(&(v, a), row)| (ref_of(m, v), m.action_name(a), row))
            .collect();
        rows.sort_by(|x, y| (&x.0, x.1).cmp(&(&y.0, y.1)));
        for (src, action, row) in rows {
            for (i, &(d, p)) in row.dests.iter().enumerate() {
                let _ = write!(out, "  {src} --{action}");
                if p.to_bits() != 1.0f64.to_bits() {
                    let _ = write!(out, ", p={p:?}");
                }
                if i == 0 && row.reward.to_bits() != 0.0f64.to_bits() {
                    let _ = write!(out, ", r={:?}", row.reward);
                }
                let _ = writeln!(out, "--> {}", ref_of(m, d));
            }
        }
        out.push_str("end\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "rmdp 1
# toy
component C
  entry en
  exit ex
  en --a, p=0.5, r=-1.5--> ex
  en --a, p=0.5--> mid   # trailing comment
  mid --b--> ex
end
";

    #[test]
    fn parses_and_round_trips() {
        let m = parse(TOY).unwrap();
        assert_eq!(m.components().len(), 1);
        let text = serialize(&m);
        let again = parse(&text).unwrap();
        assert_eq!(m, again);
        assert_eq!(serialize(&again), text);
    }

    #[test]
    fn empty_file_is_missing_header() {
        match parse("") {
            Err(ParseError::Syntax { line, expected }) => {
                assert_eq!(line, 1);
                assert!(expected.contains("header"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_normalized_group_reports_validation_error() {
        let text = "rmdp 1\ncomponent C\n entry en\n exit ex\n node x\n en --a, p=0.5--> ex\n en --a, p=0.4--> x\n x --a--> ex\nend\n";
        match parse(text) {
            Err(ParseError::Validation(d)) => {
                assert_eq!(d.len(), 1);
                assert_eq!(d[0].diagnostic.rule, crate::model::Rule::NonNormalized);
                assert_eq!(d[0].line, Some(6));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reward_on_later_line_is_accepted_and_conflicts_rejected() {
        let ok = "rmdp 1\ncomponent C\n entry en\n exit ex\n en --a, p=0.5--> ex\n en --a, p=0.5, r=2--> ex2\n ex2 --a--> ex\nend\n";
        let m = parse(ok).unwrap();
        let en = m.vertex_by_label("en").unwrap();
        let a = m.action_by_name("a").unwrap();
        assert_eq!(m.row(en, a).unwrap().reward, 2.0);
        let bad = "rmdp 1\ncomponent C\n entry en\n exit ex\n en --a, p=0.5, r=1--> ex\n en --a, p=0.5, r=2--> ex\nend\n";
        assert!(matches!(parse(bad), Err(ParseError::Build { line: 6, .. })));
    }

    #[test]
    fn corrupted_line_is_named() {
        let lines: Vec<&str> = TOY.lines().collect();
        for target in 0..lines.len() {
            let mut copy: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
            copy[target] = format!("{} @", copy[target].split('#').next().unwrap());
            let err = parse(&copy.join("\n")).unwrap_err();
            match err {
                ParseError::Syntax { line, .. } => assert_eq!(line, target + 1, "{copy:?}"),
                other => panic!("line {target}: {other:?}"),
            }
        }
    }

    #[test]
    fn empty_component_serializes_to_a_bare_block() {
        let mut b = RmdpBuilder::new();
        b.component("Z");
        let m = b.build().unwrap();
        assert_eq!(serialize(&m), "rmdp 1\n\ncomponent Z\nend\n");
    }

    #[test]
    fn floats_keep_their_bits() {
        let text = "rmdp 1\ncomponent C\n entry en\n exit ex\n en --a, p=0.1, r=0.30000000000000004--> ex\n en --a, p=0.9--> y\n y --a, r=-0--> ex\nend\n";
        let m = parse(text).unwrap();
        let back = parse(&serialize(&m)).unwrap();
        assert_eq!(m, back);
        let y = back.vertex_by_label("y").unwrap();
        let a = back.action_by_name("a").unwrap();
        assert_eq!(back.row(y, a).unwrap().reward.to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn unknown_box_target_is_located() {
        let text = "rmdp 1\ncomponent C\n entry en\n exit ex\n box k : Nope\n en --a--> k:x\nend\n";
        assert!(matches!(parse(text), Err(ParseError::Build { line: 5, .. })));
    }
}
