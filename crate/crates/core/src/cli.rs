//! Command-line front end.
//!
//! Exit codes: 0 success (or ACCEPT), 1 input or usage error, 2 enumeration
//! cap exceeded, 3 REJECT or no optimal solution.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::model::{anticipation_graph, parse_instance, to_json, Assignment, MultilevelInstance};
use crate::rational::Rational;
use crate::reformulate::{
    build_adversaries, build_alt, build_pessimistic, epigraph_form, AdversaryTarget,
};
use crate::solve::{compare, delta_sweep, solve_auto, solve_canonical};
use crate::subsolver::{
    solve_hierarchical, ExactOracle, OptResult, SolveError, SolverConfig, Status, DEFAULT_ORACLE_CAP,
};
use crate::verify::{load_candidate, verify, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CAP: i32 = 2;
pub const EXIT_REJECT: i32 = 3;

pub const CAP_ENV: &str = "NOROBI_ORACLE_CAP";

#[derive(Parser, Debug)]
#[command(name = "norobi", version, about = "Exact near-optimal robust multilevel optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Instance document (JSON).
    instance: PathBuf,
    /// Maximum points per enumeration (default 10^7, or $NOROBI_ORACLE_CAP).
    #[arg(long)]
    oracle_cap: Option<u128>,
    /// Worker threads for the outermost enumeration.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the JSON result here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GraphFormat {
    Dot,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the robust problem (or the canonical one without near-optimality data).
    Solve(Common),
    /// Check a candidate solution and optional objective bound.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        bound: Option<Rational>,
    },
    /// Solve the canonical, robust and objective-protecting problems.
    Compare(Common),
    /// Emit the derived subproblems as instance documents.
    Reformulate {
        #[command(flatten)]
        common: Common,
        /// Upper-level decisions to parameterize with; defaults to the canonical solution.
        #[arg(long)]
        candidate: Option<PathBuf>,
        /// Write one file per derived problem into this directory.
        #[arg(long)]
        emit_dir: Option<PathBuf>,
    },
    /// Print the anticipation graph.
    Graph {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = GraphFormat::Dot)]
        format: GraphFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve the robust problem for a list of tolerances.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, strictly increasing, nonnegative tolerances.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        deltas: Vec<Rational>,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Cap(String),
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::CapExceeded { .. } => CliError::Cap(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Solve(s) => s.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<MultilevelInstance, CliError> {
    parse_instance(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn oracle_for(common: &Common) -> Result<ExactOracle, CliError> {
    let cap = match common.oracle_cap {
        Some(c) => c,
        None => match std::env::var(CAP_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Input(format!("{CAP_ENV}: not a positive integer: {s}")))?,
            Err(_) => DEFAULT_ORACLE_CAP,
        },
    };
    if common.jobs == 0 {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    Ok(ExactOracle::new(SolverConfig {
        oracle_cap: cap,
        jobs: common.jobs,
    }))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(CliError::Input(format!("stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("JSON serialization is infallible")
}

fn problem_name(instance: &MultilevelInstance) -> &'static str {
    match instance.nos() {
        None => "CANONICAL",
        Some(n) if n.protected_levels.len() > 1 => "GNORMP",
        Some(_) if instance.level_count() > 2 => "NOMIMLP",
        Some(_) => "NORBIP",
    }
}

fn status_code(r: &OptResult) -> i32 {
    if r.status == Status::Optimal {
        EXIT_OK
    } else {
        EXIT_REJECT
    }
}

fn cmd_solve(common: &Common) -> Result<i32, CliError> {
    let instance = load_instance(&common.instance)?;
    let oracle = oracle_for(common)?;
    let r = solve_auto(&instance, &oracle)?;
    #[derive(Serialize)]
    struct Out<'a> {
        problem: &'a str,
        #[serde(flatten)]
        result: &'a OptResult,
    }
    emit(
        common.output.as_deref(),
        &pretty(&Out {
            problem: problem_name(&instance),
            result: &r,
        }),
    )?;
    Ok(status_code(&r))
}

fn cmd_verify(common: &Common, candidate: &Path, bound: Option<&Rational>) -> Result<i32, CliError> {
    let instance = load_instance(&common.instance)?;
    let oracle = oracle_for(common)?;
    let cand = load_candidate(&instance, &read(candidate)?)?;
    let report = verify(&instance, &cand, bound, &oracle)?;
    emit(common.output.as_deref(), &report.to_json())?;
    Ok(if report.accepted() { EXIT_OK } else { EXIT_REJECT })
}

fn cmd_compare(common: &Common) -> Result<i32, CliError> {
    let instance = load_instance(&common.instance)?;
    let oracle = oracle_for(common)?;
    let c = compare(&instance, &oracle)?;
    emit(common.output.as_deref(), &pretty(&c))?;
    Ok(EXIT_OK)
}

fn cmd_sweep(common: &Common, deltas: &[Rational]) -> Result<i32, CliError> {
    let instance = load_instance(&common.instance)?;
    let oracle = oracle_for(common)?;
    let points = delta_sweep(&instance, deltas, &oracle)?;
    emit(common.output.as_deref(), &pretty(&points))?;
    Ok(EXIT_OK)
}

fn cmd_graph(instance: &Path, format: GraphFormat, output: Option<&Path>) -> Result<i32, CliError> {
    let instance = load_instance(instance)?;
    let g = anticipation_graph(&instance);
    let text = match format {
        GraphFormat::Dot => g.to_dot(),
        GraphFormat::Json => pretty(&g),
    };
    emit(output, text.trim_end())?;
    Ok(EXIT_OK)
}

fn doc(instance: &MultilevelInstance) -> Value {
    serde_json::from_str(&to_json(instance)).expect("instance JSON round-trips")
}

fn cmd_reformulate(common: &Common, candidate: Option<&Path>, emit_dir: Option<&Path>) -> Result<i32, CliError> {
    let instance = load_instance(&common.instance)?;
    let oracle = oracle_for(common)?;
    let nos = instance
        .nos()
        .ok_or_else(|| CliError::Input("instance has no near_optimality section".into()))?;
    let d = nos.deviating_level;
    let point: Assignment = match candidate {
        Some(p) => load_candidate(&instance, &read(p)?)?,
        None => {
            let r = solve_canonical(&instance, &oracle)?;
            r.witness
                .ok_or_else(|| CliError::Input("canonical problem has no optimal solution".into()))?
        }
    };
    let x = instance.prefix(&point, d);

    let mut docs: Vec<(String, Value)> = Vec::new();
    let epi = epigraph_form(&instance, d, &x).map_err(|e| CliError::Input(e.to_string()))?;
    docs.push(("epigraph".into(), doc(&epi.to_instance())));

    let fstar = solve_hierarchical(&instance, &x, d, &oracle)?
        .value
        .ok_or_else(|| CliError::Input("deviating level has no optimal response".into()))?;
    let levels: Vec<usize> = nos.protected_levels.iter().copied().collect();
    let set = build_adversaries(&instance, &levels, &x, &fstar).map_err(|e| CliError::Input(e.to_string()))?;
    let mut insensitive = Vec::new();
    for adv in &set.entries {
        let name = match &adv.target {
            AdversaryTarget::Constraint { level, index, .. } => format!("adversary_{level}_{index}"),
            AdversaryTarget::Objective { level } => format!("adversary_{level}_objective"),
        };
        match &adv.subproblem {
            Some(p) => docs.push((name, doc(&p.to_instance()))),
            None => insensitive.push(adv.target.label()),
        }
    }
    if let Ok(alt) = build_alt(&instance) {
        docs.push(("alt".into(), doc(&alt)));
    }
    let pess = build_pessimistic(&instance).map_err(|e| CliError::Input(e.to_string()))?;
    docs.push(("pessimistic".into(), doc(&pess)));

    match emit_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
            for (name, v) in &docs {
                let path = dir.join(format!("{name}.json"));
                fs::write(&path, pretty(v))
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            }
            let summary = json!({
                "parameters": x,
                "fstar": fstar,
                "files": docs.iter().map(|(n, _)| format!("{n}.json")).collect::<Vec<_>>(),
                "insensitive": insensitive,
            });
            emit(common.output.as_deref(), &pretty(&summary))?;
        }
        None => {
            let mut obj = serde_json::Map::new();
            obj.insert("parameters".into(), json!(x));
            obj.insert("fstar".into(), json!(fstar));
            obj.insert("insensitive".into(), json!(insensitive));
            for (name, v) in docs {
                obj.insert(name, v);
            }
            emit(common.output.as_deref(), &pretty(&Value::Object(obj)))?;
        }
    }
    Ok(EXIT_OK)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Verify {
            common,
            candidate,
            bound,
        } => cmd_verify(common, candidate, bound.as_ref()),
        Command::Compare(c) => cmd_compare(c),
        Command::Reformulate {
            common,
            candidate,
            emit_dir,
        } => cmd_reformulate(common, candidate.as_deref(), emit_dir.as_deref()),
        Command::Graph {
            instance,
            format,
            output,
        } => cmd_graph(instance, *format, output.as_deref()),
        Command::Sweep { common, deltas } => cmd_sweep(common, deltas),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            EXIT_INPUT
        }
        Err(CliError::Cap(m)) => {
            eprintln!("error: {m}");
            EXIT_CAP
        }
    }
}
