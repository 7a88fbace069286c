use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use rmdp::envs::{cloud_spec, palindrome_spec, spelunking_spec, EnvSpec};
use rmdp::learn::{Exploration, Hyperparameters, LearningRate};
use rmdp::transforms::{hierarchical_chain, hierarchical_chain_1exit};
use rmdp::{ComponentId, NodeId, Rmdp};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Rql,
    Rql1,
    FlatQ,
    #[serde(rename = "solve-1exit")]
    Solve1exit,
    SolveTruncated,
    SolveDeterministic,
    #[serde(rename = "pac-1exit")]
    Pac1exit,
}

impl Algorithm {
    pub fn is_learner(self) -> bool {
        matches!(self, Algorithm::Rql | Algorithm::Rql1 | Algorithm::FlatQ)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rql => "rql",
            Algorithm::Rql1 => "rql1",
            Algorithm::FlatQ => "flat-q",
            Algorithm::Solve1exit => "solve-1exit",
            Algorithm::SolveTruncated => "solve-truncated",
            Algorithm::SolveDeterministic => "solve-deterministic",
            Algorithm::Pac1exit => "pac-1exit",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRef {
    pub component: String,
    pub entry: String,
}

/// Fields left out keep the environment's (or the library's) default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub learning_rate: Option<LearningRate>,
    pub exploration: Option<Exploration>,
    pub epsilon: Option<f64>,
    pub quantization: Option<f64>,
    pub step_cap: Option<usize>,
    pub total_steps: Option<u64>,
    pub box_discount: Option<f64>,
    pub exploring_starts: Option<bool>,
    pub eval_episodes: Option<usize>,
    pub eval_every: Option<u64>,
    pub initial_q: Option<f64>,
    pub include_truncated: Option<bool>,
}

impl HyperOverrides {
    pub fn apply(&self, h: &mut Hyperparameters) {
        if let Some(v) = self.learning_rate {
            h.learning_rate = v;
        }
        if let Some(v) = self.epsilon {
            h.exploration = Exploration::constant(v);
        }
        if let Some(v) = self.exploration {
            h.exploration = v;
        }
        if let Some(v) = self.quantization {
            h.quantization = v;
        }
        if let Some(v) = self.step_cap {
            h.step_cap = v;
        }
        if let Some(v) = self.total_steps {
            h.total_steps = v;
        }
        if let Some(v) = self.box_discount {
            h.box_discount = v;
        }
        if let Some(v) = self.exploring_starts {
            h.exploring_starts = v;
        }
        if let Some(v) = self.eval_episodes {
            h.eval_episodes = v;
        }
        if self.eval_every.is_some() {
            h.eval_every = self.eval_every;
        }
        if let Some(v) = self.initial_q {
            h.initial_q = v;
        }
        if let Some(v) = self.include_truncated {
            h.include_truncated = v;
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSettings {
    #[serde(default = "default_bound")]
    pub bound: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub depth_cap: Option<usize>,
}

fn default_bound() -> usize {
    30
}

fn default_tol() -> f64 {
    1e-10
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            bound: default_bound(),
            tol: default_tol(),
            depth_cap: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacSettings {
    pub eps: f64,
    pub delta: f64,
    /// Bound on expected steps to termination under any strategy.
    pub k: f64,
    /// Bound on absolute one-step rewards; defaults to the model's largest.
    pub r_max: Option<f64>,
}

/// A run described by one TOML file. Relative paths resolve against the
/// file's directory.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Path to a `.rmdp` file or a built-in name such as `env:cloud`.
    pub model: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub start: Option<StartRef>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub hyper: HyperOverrides,
    #[serde(default)]
    pub solve: SolveSettings,
    pub pac: Option<PacSettings>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self, overridden: Option<&Path>) -> PathBuf {
        match (overridden, &self.out) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.resolve(p),
            (None, None) => self.base_dir.join("out"),
        }
    }

    /// Model, start and hyperparameters with the overrides applied.
    pub fn setup(&self) -> Result<(Loaded, Hyperparameters), CliError> {
        let mut loaded = load_model(&self.model, &self.base_dir)?;
        if let Some(s) = &self.start {
            loaded.start = find_start(&loaded.model, &s.component, &s.entry)?;
        }
        let mut h = loaded.hyper.clone().unwrap_or_else(|| Hyperparameters::new(loaded.start));
        h.start = loaded.start;
        self.hyper.apply(&mut h);
        h.check().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((loaded, h))
    }
}

pub struct Loaded {
    pub name: String,
    pub model: Rmdp,
    pub start: (ComponentId, NodeId),
    pub hyper: Option<Hyperparameters>,
}

impl From<EnvSpec> for Loaded {
    fn from(s: EnvSpec) -> Self {
        Loaded {
            name: s.name,
            model: s.model,
            start: s.start,
            hyper: Some(s.hyperparameters),
        }
    }
}

pub fn find_start(m: &Rmdp, component: &str, entry: &str) -> Result<(ComponentId, NodeId), CliError> {
    let c = m
        .component_by_name(component)
        .ok_or_else(|| CliError::Usage(format!("no component `{component}`")))?;
    let n = m
        .node_by_name(entry)
        .filter(|n| m.component(c).entries.contains(n))
        .ok_or_else(|| CliError::Usage(format!("`{entry}` is not an entry of `{component}`")))?;
    Ok((c, n))
}

/// Built-ins: `env:cloud`, `env:palindrome`, `env:spelunking`,
/// `env:chain:<n>` and `env:chain-1exit:<n>`. Anything else is a file.
pub fn load_model(reference: &str, base: &Path) -> Result<Loaded, CliError> {
    if let Some(name) = reference.strip_prefix("env:") {
        return builtin(name);
    }
    let path = if Path::new(reference).is_absolute() {
        PathBuf::from(reference)
    } else {
        base.join(reference)
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let model = rmdp::text::parse(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let first = model
        .components()
        .first()
        .and_then(|c| c.entries.first().copied())
        .ok_or_else(|| CliError::Domain("model has no entry to start from".into()))?;
    Ok(Loaded {
        name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        model,
        start: (ComponentId(0), first),
        hyper: None,
    })
}

fn builtin(name: &str) -> Result<Loaded, CliError> {
    let chain = |rest: &str, single: bool| -> Result<Loaded, CliError> {
        let n: usize = rest
            .parse()
            .ok()
            .filter(|&n| (1..=30).contains(&n))
            .ok_or_else(|| CliError::Usage(format!("chain length must be 1..=30, got `{rest}`")))?;
        let model = if single { hierarchical_chain_1exit(n) } else { hierarchical_chain(n) };
        let start = find_start(&model, &format!("M{n}"), &format!("e{n}"))?;
        Ok(Loaded {
            name: format!("chain{n}"),
            model,
            start,
            hyper: None,
        })
    };
    match name {
        "cloud" => Ok(cloud_spec().into()),
        "palindrome" => Ok(palindrome_spec().into()),
        "spelunking" => Ok(spelunking_spec().into()),
        _ => {
            if let Some(rest) = name.strip_prefix("chain-1exit:") {
                chain(rest, true)
            } else if let Some(rest) = name.strip_prefix("chain:") {
                chain(rest, false)
            } else {
                Err(CliError::Usage(format!("unknown built-in model `{name}`")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let cfg: RunConfig = toml::from_str(
            r#"
            model = "env:cloud"
            algorithm = "flat-q"
            seeds = [1, 2]
            [hyper]
            learning_rate = { kind = "visit-power", value = 0.7 }
            exploration = { initial = 1.0, final = 0.1, final_step = 1000 }
            total_steps = 500
            [solve]
            bound = 12
            "#,
        )
        .unwrap();
        assert_eq!(cfg.algorithm, Algorithm::FlatQ);
        assert_eq!(cfg.solve.bound, 12);
        assert_eq!(cfg.solve.tol, 1e-10);
        let (_, h) = cfg.setup().unwrap();
        assert_eq!(h.learning_rate, LearningRate::VisitPower(0.7));
        assert_eq!(h.exploration.final_step, 1000);
        assert_eq!(h.total_steps, 500);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("model = \"x\"\nalgorithm = \"rql\"\nsede = 1\n").is_err());
    }

    #[test]
    fn builtins() {
        assert!(matches!(builtin("chain:0"), Err(CliError::Usage(_))));
        let l = builtin("chain-1exit:3").unwrap();
        assert!(l.model.is_single_exit());
        assert_eq!(l.model.node_name(l.start.1), "e3");
        assert!(builtin("maze").is_err());
    }
}
