use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::TransformError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StackOp {
    Push(usize),
    Pop,
    Stay,
}

/// Which stack tops a transition applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TopPattern {
    Any,
    Empty,
    Symbol(usize),
}

impl TopPattern {
    pub fn matches(self, top: Option<usize>) -> bool {
        match self {
            TopPattern::Any => true,
            TopPattern::Empty => top.is_none(),
            TopPattern::Symbol(s) => top == Some(s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PdaTransition {
    pub from: usize,
    pub input: usize,
    pub top: TopPattern,
    pub to: usize,
    pub op: StackOp,
}

/// A pushdown monitor. A missing transition, or a pop on the empty stack,
/// sends the run to the absorbing rejecting sink. Where several transitions
/// match, the first one listed wins; guesses are expressed as the agent's
/// choice of when to feed the special input.
#[derive(Clone, Debug, PartialEq)]
pub struct Pda {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub symbols: Vec<String>,
    pub transitions: Vec<PdaTransition>,
    pub initial: usize,
    pub accepting: BTreeSet<usize>,
    /// Index into `inputs`.
    pub special: usize,
}

/// State of a direct run of a [`Pda`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PdaRun {
    pub state: usize,
    pub stack: Vec<usize>,
    pub rejected: bool,
}

impl Pda {
    pub fn input(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == name)
    }

    pub fn state(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn symbol(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    /// The move taken from `state` on `input` with `top` on the stack, or
    /// `None` for rejection.
    pub fn delta(&self, state: usize, input: usize, top: Option<usize>) -> Option<(usize, StackOp)> {
        let t = self
            .transitions
            .iter()
            .find(|t| t.from == state && t.input == input && t.top.matches(top))?;
        if t.op == StackOp::Pop && top.is_none() {
            return None;
        }
        Some((t.to, t.op))
    }

    pub fn start(&self) -> PdaRun {
        PdaRun {
            state: self.initial,
            stack: Vec::new(),
            rejected: false,
        }
    }

    pub fn feed(&self, run: &mut PdaRun, input: usize) {
        if run.rejected {
            return;
        }
        match self.delta(run.state, input, run.stack.last().copied()) {
            None => run.rejected = true,
            Some((to, op)) => {
                run.state = to;
                match op {
                    StackOp::Push(g) => run.stack.push(g),
                    StackOp::Pop => {
                        run.stack.pop();
                    }
                    StackOp::Stay => {}
                }
            }
        }
    }

    pub fn accepts_now(&self, run: &PdaRun) -> bool {
        !run.rejected && run.stack.is_empty() && self.accepting.contains(&run.state)
    }

    /// Structural checks: indices in range and distinct names.
    pub fn check(&self) -> Result<(), TransformError> {
        let bad = |s: String| Err(TransformError::BadParameter(s));
        for (what, names) in [("state", &self.states), ("input", &self.inputs), ("symbol", &self.symbols)] {
            let set: BTreeSet<&String> = names.iter().collect();
            if set.len() != names.len() {
                return bad(format!("duplicate {what} name"));
            }
            if let Some(n) = names.iter().find(|n| !crate::model::is_identifier(n)) {
                return bad(format!("{what} `{n}` is not an identifier"));
            }
        }
        if self.states.is_empty() || self.initial >= self.states.len() {
            return bad("initial state out of range".into());
        }
        if self.special >= self.inputs.len() {
            return bad("special input out of range".into());
        }
        if self.accepting.iter().any(|&s| s >= self.states.len()) {
            return bad("accepting state out of range".into());
        }
        for t in &self.transitions {
            let sym_ok = |s: usize| s < self.symbols.len();
            let top_ok = match t.top {
                TopPattern::Symbol(s) => sym_ok(s),
                _ => true,
            };
            let op_ok = match t.op {
                StackOp::Push(s) => sym_ok(s),
                _ => true,
            };
            if t.from >= self.states.len() || t.to >= self.states.len() || t.input >= self.inputs.len() || !top_ok || !op_ok {
                return bad("transition refers to an unknown state, input or symbol".into());
            }
        }
        Ok(())
    }

    /// Text form read by [`parse_pda`].
    pub fn serialize(&self) -> String {
        let mut out = String::from("pda 1\n");
        let _ = writeln!(out, "states {}", self.states.join(" "));
        let _ = writeln!(out, "initial {}", self.states[self.initial]);
        let acc: Vec<&str> = self.accepting.iter().map(|&s| self.states[s].as_str()).collect();
        let _ = writeln!(out, "accepting {}", acc.join(" "));
        let _ = writeln!(out, "inputs {}", self.inputs.join(" "));
        let _ = writeln!(out, "special {}", self.inputs[self.special]);
        let _ = writeln!(out, "symbols {}", self.symbols.join(" "));
        for t in &self.transitions {
            let top = match t.top {
                TopPattern::Any => "*".to_string(),
                TopPattern::Empty => "_".to_string(),
                TopPattern::Symbol(s) => self.symbols[s].clone(),
            };
            let op = match t.op {
                StackOp::Push(s) => format!("push({})", self.symbols[s]),
                StackOp::Pop => "pop".into(),
                StackOp::Stay => "stay".into(),
            };
            let _ = writeln!(out, "{} {} {} -> {} {}", self.states[t.from], self.inputs[t.input], top, self.states[t.to], op);
        }
        out
    }
}

/// Reads the line-oriented PDA format:
///
/// ```text
/// pda 1
/// states push pop
/// initial push
/// accepting pop
/// inputs N S mid
/// special mid
/// symbols N S
/// push N * -> push push(N)
/// push mid * -> pop stay
/// pop N N -> pop pop
/// ```
///
/// The top column is a symbol, `*` for any top or `_` for the empty stack.
/// Declarations must precede transitions.
pub fn parse_pda(text: &str) -> Result<Pda, TransformError> {
    let err = |line: usize, message: String| TransformError::PdaSyntax { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "pda 1")) => {}
        Some((n, _)) => return Err(err(n, "expected header `pda 1`".into())),
        None => return Err(err(1, "missing header `pda 1`".into())),
    }
    let mut states: Option<Vec<String>> = None;
    let mut inputs: Option<Vec<String>> = None;
    let mut symbols: Vec<String> = Vec::new();
    let mut initial = None;
    let mut accepting = Vec::new();
    let mut special = None;
    let mut transitions = Vec::new();
    for (n, line) in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        let rest = || words[1..].iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match words[0] {
            "states" => states = Some(rest()),
            "inputs" => inputs = Some(rest()),
            "symbols" => symbols = rest(),
            "initial" => initial = Some((n, words.get(1).map(|s| s.to_string()).unwrap_or_default())),
            "accepting" => accepting = rest().into_iter().map(|s| (n, s)).collect(),
            "special" => special = Some((n, words.get(1).map(|s| s.to_string()).unwrap_or_default())),
            _ => {
                let (Some(st), Some(ins)) = (&states, &inputs) else {
                    return Err(err(n, "transition before `states` and `inputs`".into()));
                };
                if words.len() != 6 || words[3] != "->" {
                    return Err(err(n, "expected `<state> <input> <top> -> <state> <op>`".into()));
                }
                let find = |names: &[String], s: &str, what: &str| {
                    names.iter().position(|x| x == s).ok_or_else(|| err(n, format!("unknown {what} `{s}`")))
                };
                let from = find(st, words[0], "state")?;
                let input = find(ins, words[1], "input")?;
                let top = match words[2] {
                    "*" => TopPattern::Any,
                    "_" => TopPattern::Empty,
                    s => TopPattern::Symbol(find(&symbols, s, "symbol")?),
                };
                let to = find(st, words[4], "state")?;
                let op = match words[5] {
                    "pop" => StackOp::Pop,
                    "stay" => StackOp::Stay,
                    s => {
                        let inner = s
                            .strip_prefix("push(")
                            .and_then(|r| r.strip_suffix(')'))
                            .ok_or_else(|| err(n, format!("unknown stack operation `{s}`")))?;
                        StackOp::Push(find(&symbols, inner, "symbol")?)
                    }
                };
                transitions.push(PdaTransition { from, input, top, to, op });
            }
        }
    }
    let states = states.ok_or_else(|| err(0, "missing `states`".into()))?;
    let inputs = inputs.ok_or_else(|| err(0, "missing `inputs`".into()))?;
    let (ln, init) = initial.ok_or_else(|| err(0, "missing `initial`".into()))?;
    let initial = states.iter().position(|s| *s == init).ok_or_else(|| err(ln, format!("unknown state `{init}`")))?;
    let (ln, sp) = special.ok_or_else(|| err(0, "missing `special`".into()))?;
    let special = inputs.iter().position(|s| *s == sp).ok_or_else(|| err(ln, format!("unknown input `{sp}`")))?;
    let mut acc = BTreeSet::new();
    for (ln, s) in accepting {
        acc.insert(states.iter().position(|x| *x == s).ok_or_else(|| err(ln, format!("unknown state `{s}`")))?);
    }
    let pda = Pda {
        states,
        inputs,
        symbols,
        transitions,
        initial,
        accepting: acc,
        special,
    };
    pda.check()?;
    Ok(pda)
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn run(p: &Pda, word: &[&str]) -> PdaRun {
        let mut r = p.start();
        for w in word {
            p.feed(&mut r, p.input(w).unwrap());
        }
        r
    }

    #[test]
    fn even_palindromes() {
        let p = parse_pda(EVEN).unwrap();
        assert!(p.accepts_now(&run(&p, &["a", "b", "mid", "b", "a"])));
        assert!(p.accepts_now(&run(&p, &["mid"])));
        assert!(!p.accepts_now(&run(&p, &["a", "b", "mid", "a", "b"])));
        assert!(run(&p, &["a", "mid", "b"]).rejected);
        assert!(!p.accepts_now(&run(&p, &["a", "mid"])));
    }

    #[test]
    fn pop_on_empty_rejects() {
        let mut p = parse_pda(EVEN).unwrap();
        p.transitions.push(PdaTransition {
            from: 1,
            input: 0,
            top: TopPattern::Any,
            to: 1,
            op: StackOp::Pop,
        });
        let r = run(&p, &["mid", "a"]);
        assert!(r.rejected);
    }

    #[test]
    fn rejection_is_absorbing() {
        let p = parse_pda(EVEN).unwrap();
        let r = run(&p, &["mid", "mid", "a", "mid"]);
        assert!(r.rejected);
        assert_eq!(r.state, 1);
    }

    #[test]
    fn text_round_trip() {
        let p = parse_pda(EVEN).unwrap();
        assert_eq!(parse_pda(&p.serialize()).unwrap(), p);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        assert!(matches!(parse_pda(""), Err(TransformError::PdaSyntax { line: 1, .. })));
        let broken = EVEN.replace("pop a a -> pop pop", "pop a a => pop pop");
        assert!(matches!(parse_pda(&broken), Err(TransformError::PdaSyntax { line: 11, .. })));
        let unknown = EVEN.replace("push(b)", "push(c)");
        assert!(matches!(parse_pda(&unknown), Err(TransformError::PdaSyntax { line: 9, .. })));
    }
}
