mod config;
mod solve;
mod train;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rmdp::envs::{cloud_spec, palindrome_spec, spelunking_spec};
use rmdp::oracle::lp_export_1exit;
use rmdp::text::{parse, serialize};
use rmdp::transforms::{parse_pda, pda_product_detailed, ProductOptions, ProductRewards};

use config::{load_model, RunConfig};
use train::write;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or unwritable files. Exit code 2.
    Usage(String),
    /// The input was read but is invalid or cannot be handled. Exit code 1.
    Domain(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(s) | CliError::Domain(s) => f.write_str(s),
        }
    }
}

#[derive(Parser)]
#[command(name = "rmdp", version, about = "Recursive MDPs: check, solve, learn and export")]
struct Cli {
    /// Print nothing but errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model file.
    Validate { path: PathBuf },
    /// Run an exact solver described by a run config.
    Solve {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train a learner on every seed of a run config.
    Train {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write the linear program of a 1-exit model.
    ExportLp {
        /// Model file or built-in name (`env:chain-1exit:3`, ...).
        model: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compose a flat model with a pushdown monitor.
    Product {
        /// Flat model file or built-in name.
        mdp: String,
        /// Monitor file.
        pda: PathBuf,
        /// Nodes where a declaration can succeed.
        #[arg(long, required = true, num_args = 1..)]
        goal: Vec<String>,
        #[arg(long, default_value_t = 50.0)]
        success: f64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        reject: f64,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        step: f64,
        #[arg(long, default_value_t = 0.0)]
        corruption: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write a bundled environment as a model file plus its settings.
    Env {
        /// cloud, palindrome or spelunking.
        name: String,
        /// Output directory.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(path: &Path, quiet: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let m = parse(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    if !quiet {
        let boxes: usize = m.components().iter().map(|c| c.boxes.len()).sum();
        println!(
            "{}: ok, {} components, {} boxes, {} vertices{}",
            path.display(),
            m.components().len(),
            boxes,
            m.all_vertices().len(),
            if m.is_single_exit() { ", single-exit" } else { "" }
        );
    }
    Ok(())
}

fn cmd_export_lp(model: &str, out: Option<&Path>) -> Result<(), CliError> {
    let loaded = load_model(model, Path::new("."))?;
    let lp = lp_export_1exit(&loaded.model).map_err(|e| CliError::Domain(e.to_string()))?;
    emit(out, &lp.to_lp_text())
}

#[allow(clippy::too_many_arguments)]
fn cmd_product(
    mdp: &str,
    pda: &Path,
    goals: &[String],
    rewards: ProductRewards,
    corruption: f64,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(), CliError> {
    let loaded = load_model(mdp, Path::new("."))?;
    let text = fs::read_to_string(pda).map_err(|e| CliError::io(pda, e))?;
    let pda = parse_pda(&text).map_err(|e| CliError::Domain(format!("{}: {e}", pda.display())))?;
    let goals: Vec<&str> = goals.iter().map(String::as_str).collect();
    let opts = ProductOptions::new(rewards, corruption, &goals);
    let p = pda_product_detailed(&loaded.model, &pda, &opts).map_err(|e| CliError::Domain(e.to_string()))?;
    emit(out, &serialize(&p.model))?;
    if !quiet && out.is_some() {
        println!(
            "product: {} components, start {} {}",
            p.model.components().len(),
            p.model.component(p.start.0).name,
            p.model.node_name(p.start.1)
        );
    }
    Ok(())
}

fn cmd_env(name: &str, dir: &Path) -> Result<(), CliError> {
    let spec = match name {
        "cloud" => cloud_spec(),
        "palindrome" => palindrome_spec(),
        "spelunking" => spelunking_spec(),
        _ => return Err(CliError::Usage(format!("unknown environment `{name}`"))),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write(&dir.join(format!("{name}.rmdp")), &serialize(&spec.model))?;
    write(&dir.join(format!("{name}.json")), &spec.to_json())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let q = cli.quiet;
    match cli.command {
        Command::Validate { path } => cmd_validate(&path, q),
        Command::Solve { config, out } => solve::cmd_solve(&RunConfig::load(&config)?, out.as_deref(), q),
        Command::Train { config, out } => train::cmd_train(&RunConfig::load(&config)?, out.as_deref(), q),
        Command::ExportLp { model, out } => cmd_export_lp(&model, out.as_deref()),
        Command::Product {
            mdp,
            pda,
            goal,
            success,
            reject,
            step,
            corruption,
            out,
        } => cmd_product(&mdp, &pda, &goal, ProductRewards { success, reject, step }, corruption, out.as_deref(), q),
        Command::Env { name, out } => cmd_env(&name, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
