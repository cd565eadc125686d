//! `primgraph` command line.
//!
//! Exit codes: 0 success or safe execution, 2 usage or input errors, 3 goal
//! unreachable, 4 safety violated, 5 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::benchmarks::BenchmarkSuite;
use crate::canonical::to_canonical_string;
use crate::config::{ProjectConfig, ScenarioSpec, SystemSelection};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::graph::{EdgeClass, GraphFormat, MotionPrimitiveGraph, TimeGrid};
use crate::oracle::{calibrate_radius_with, safety_oracle, CalibrationOptions, VerdictReason};
use crate::planner::{build_lookup_table, execute_sequence, naive_execute, plan_path, ExecConfig, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;
pub const EXIT_UNSAFE: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "primgraph", version, about = "Build, plan over and execute motion primitive graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Verify all transitions and write graph JSON, DOT and a build report.
    Build(BuildArgs),
    /// Depth-first path between two primitives of a graph file.
    Plan(PlanArgs),
    /// Execute a timed goal sequence.
    Simulate(SimulateArgs),
    /// One safety-oracle evaluation.
    Oracle(OracleArgs),
    /// Pick the largest brute-force-verified explicit RoA radius.
    Calibrate(CalibrateArgs),
    /// Convert a graph file to DOT or canonical JSON.
    Export(ExportArgs),
}

#[derive(Args, Debug, Clone)]
struct SystemArgs {
    /// Built-in suite name.
    #[arg(long, conflicts_with = "config")]
    suite: Option<String>,
    /// Project configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Primitives to drop from the suite (comma separated, case-insensitive).
    #[arg(long, value_delimiter = ',')]
    without: Vec<String>,
    /// Oracle horizon override, seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Grid points per period and intervals per transient domain.
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the transition sweep.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    start: String,
    #[arg(long)]
    goal: String,
    /// Also write the path as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Planned,
    Naive,
}

impl Mode {
    fn as_str(&self) -> &'static str {
        match self {
            Mode::Planned => "planned",
            Mode::Naive => "naive",
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Graph file; built from the system when omitted.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Scenario file `{"start": ..., "goals": [{"time": ..., "goal": ...}]}`; defaults to the suite scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "planned")]
    mode: Mode,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    primitive: String,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    state: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    tb: f64,
    /// Write the oracle trajectory as CSV here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    primitive: String,
    /// Candidate radii (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    candidates: Vec<f64>,
    #[arg(long, default_value_t = 32)]
    boundary_samples: usize,
    /// Brute-force probe horizon; defaults to five oracle horizons.
    #[arg(long)]
    probe: Option<f64>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value = "dot")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Unreachable { .. } => EXIT_UNREACHABLE,
        Error::IntegrationFailure { .. } | Error::ModelEvaluation { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Build(a) => cmd_build(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Export(a) => cmd_export(&a),
    }
}

impl SystemArgs {
    fn project(&self) -> Result<ProjectConfig> {
        let mut cfg = match (&self.suite, &self.config) {
            (Some(s), None) => ProjectConfig::for_suite(s),
            (None, Some(p)) => ProjectConfig::load(p)?,
            (None, None) => return Err(Error::Config("one of --suite or --config is required".into())),
            (Some(_), Some(_)) => return Err(Error::Config("--suite and --config are exclusive".into())),
        };
        if !self.without.is_empty() {
            match &mut cfg.system {
                SystemSelection::Suite { without, .. } => without.extend(self.without.iter().cloned()),
                SystemSelection::Linear(_) => return Err(Error::Config("--without needs a built-in suite".into())),
            }
        }
        if let Some(h) = self.horizon {
            cfg.oracle_horizon = Some(h);
        }
        if let Some(n) = self.grid_n {
            cfg.grid = Some(crate::graph::GridPolicy::uniform(n));
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn build_with(cfg: &ProjectConfig, suite: &BenchmarkSuite) -> Result<MotionPrimitiveGraph> {
    let mut g = pool(cfg.threads)?.install(|| suite.build_graph())?;
    g.meta.config_hash = Some(cfg.hash()?);
    Ok(g)
}

fn unreachable_pairs(g: &MotionPrimitiveGraph) -> Vec<(String, String)> {
    build_lookup_table(g).unreachable
}

#[derive(Serialize)]
struct BuildReport {
    config_hash: String,
    suite: String,
    nodes: usize,
    edges: usize,
    class_1: usize,
    class_2: usize,
    pairs_checked: usize,
    oracle_calls: usize,
    accepted: usize,
    unreachable: Vec<(String, String)>,
    threads: usize,
    wall_time_s: f64,
}

fn cmd_build(a: &BuildArgs) -> Result<i32> {
    let cfg = a.system.project()?;
    let suite = cfg.resolve()?;
    let started = Instant::now();
    let g = build_with(&cfg, &suite)?;
    let wall = started.elapsed().as_secs_f64();

    let base = a.out.join(&suite.name);
    let json_path = base.with_extension("graph.json");
    let dot_path = base.with_extension("dot");
    let report_path = base.with_extension("report.json");
    write(&json_path, &g.to_json()?)?;
    write(&dot_path, &g.to_dot())?;

    let unreachable = unreachable_pairs(&g);
    let count = |c: EdgeClass| g.edges.iter().filter(|e| e.class == c).count();
    let report = BuildReport {
        config_hash: g.meta.config_hash.clone().unwrap_or_default(),
        suite: suite.name.clone(),
        nodes: g.nodes.len(),
        edges: g.edges.len(),
        class_1: count(EdgeClass::One),
        class_2: count(EdgeClass::Two),
        pairs_checked: g.meta.tallies.len(),
        oracle_calls: g.meta.tallies.iter().map(|t| t.cells).sum(),
        accepted: g.meta.tallies.iter().map(|t| t.accepted).sum(),
        unreachable: unreachable.clone(),
        threads: cfg.threads.unwrap_or_else(rayon::current_num_threads),
        wall_time_s: wall,
    };
    write(&report_path, &to_canonical_string(&report)?)?;

    println!(
        "built `{}`: {} nodes, {} edges ({} class 1, {} class 2) in {wall:.2} s",
        suite.name,
        report.nodes,
        report.edges,
        report.class_1,
        report.class_2
    );
    if unreachable.is_empty() {
        println!("graph is strongly connected");
    } else {
        let total = g.nodes.len() * g.nodes.len();
        println!("disconnected: {} of {total} ordered pairs unreachable", unreachable.len());
        for (s, t) in &unreachable {
            println!("  {s} -/-> {t}");
        }
    }
    println!("wrote {}, {}, {}", json_path.display(), dot_path.display(), report_path.display());
    Ok(EXIT_OK)
}

fn load_graph(path: &Path) -> Result<MotionPrimitiveGraph> {
    MotionPrimitiveGraph::from_json(&fs::read_to_string(path)?)
}

fn cmd_plan(a: &PlanArgs) -> Result<i32> {
    let g = load_graph(&a.graph)?;
    let path = plan_path(&g, &a.start, &a.goal)?;
    println!("{}", path.nodes.join(" -> "));
    for h in &path.hops {
        match h.class {
            EdgeClass::One => println!("  {} -> {} [class 1]", h.from, h.to),
            EdgeClass::Two => {
                let cells: Vec<String> = h.feasible.iter().map(|(ta, tb)| format!("({ta:.4}, {tb:.4})")).collect();
                println!("  {} -> {} [class 2; (t_A, t_B): {}]", h.from, h.to, cells.join(" "));
            }
        }
    }
    if let Some(out) = &a.out {
        let doc = json!({ "config_hash": g.meta.config_hash, "path": path });
        write(out, &to_canonical_string(&doc)?)?;
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let cfg = a.system.project()?;
    let suite = cfg.resolve()?;
    let (start, goals) = match &a.scenario {
        Some(p) => {
            let s = ScenarioSpec::load(p)?;
            (s.start, s.goals)
        }
        None => (suite.scenario_start.clone(), suite.scenario.clone()),
    };
    let exec_cfg = ExecConfig {
        integrator: suite.oracle.integrator,
        ..ExecConfig::default()
    };
    let log = match a.mode {
        Mode::Naive => naive_execute(&suite.primitives, &goals, &start, &exec_cfg)?,
        Mode::Planned => {
            let g = match &a.graph {
                Some(p) => {
                    let g = load_graph(p)?;
                    if let Some(n) = g.nodes.iter().find(|n| suite.primitive(&n.name).is_none()) {
                        return Err(Error::Config(format!("graph node `{}` is not in the suite", n.name)));
                    }
                    g
                }
                None => build_with(&cfg, &suite)?,
            };
            let table = build_lookup_table(&g);
            let mut from = start.as_str();
            for goal in &goals {
                plan_path(&g, from, &goal.goal)?;
                from = &goal.goal;
            }
            execute_sequence(&suite.primitives, &g, &table, &goals, &start, &exec_cfg)?
        }
    };
    let mode = a.mode.as_str();
    let summary = log.summary();
    let doc = json!({ "config_hash": cfg.hash()?, "mode": mode, "summary": summary });
    write(&a.out.join(format!("{mode}.csv")), &log.to_csv())?;
    write(&a.out.join(format!("{mode}.summary.json")), &to_canonical_string(&doc)?)?;
    println!("{mode}: {} (min margin {:.6e})", summary.outcome.name(), summary.min_margin);
    println!("executed: {}", summary.executed.join(", "));
    Ok(match summary.outcome {
        Outcome::CompletedSafe => EXIT_OK,
        Outcome::SafetyViolated { t, ref constraint, ref primitive } => {
            println!("violated `{constraint}` in {primitive} at t = {t:.4}");
            EXIT_UNSAFE
        }
        Outcome::TrackingFailed { ref reason, .. } => {
            println!("failed: {reason}");
            EXIT_NUMERICAL
        }
    })
}

fn cmd_oracle(a: &OracleArgs) -> Result<i32> {
    let cfg = a.system.project()?;
    let suite = cfg.resolve()?;
    let b = suite
        .primitive(&a.primitive)
        .ok_or_else(|| Error::UnknownPrimitive(a.primitive.clone()))?;
    let mut ocfg = suite.oracle;
    ocfg.record_trajectory = a.trajectory.is_some();
    let v = safety_oracle(b, &State::from_vec(a.state.clone()), a.tb, &ocfg)?;
    if let (Some(path), Some(tr)) = (&a.trajectory, &v.trajectory) {
        write(path, &tr.to_csv())?;
    }
    let mut doc = serde_json::to_value(&v)?;
    if let Some(obj) = doc.as_object_mut() {
        obj.remove("trajectory");
        obj.insert("config_hash".into(), json!(cfg.hash()?));
        obj.insert("primitive".into(), json!(b.name()));
        obj.insert("tb".into(), json!(a.tb));
    }
    print!("{}", crate::canonical::value_to_canonical(&doc));
    Ok(if v.reason == VerdictReason::IntegrationFailed { EXIT_NUMERICAL } else { EXIT_OK })
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<i32> {
    let cfg = a.system.project()?;
    let suite = cfg.resolve()?;
    let b = suite
        .primitive(&a.primitive)
        .ok_or_else(|| Error::UnknownPrimitive(a.primitive.clone()))?;
    let grid = TimeGrid::entry(b, &suite.grid_policy).points;
    let opts = CalibrationOptions {
        probe_horizon: a.probe.unwrap_or(5.0 * suite.oracle.horizon),
        boundary_samples: a.boundary_samples,
        seed: cfg.seed,
        integrator: suite.oracle.integrator,
    };
    let res = pool(cfg.threads)?.install(|| calibrate_radius_with(b, &grid, &a.candidates, &opts));
    let doc = json!({
        "config_hash": cfg.hash()?,
        "primitive": b.name(),
        "tb_grid": grid,
        "result": res,
    });
    print!("{}", to_canonical_string(&doc)?);
    Ok(EXIT_OK)
}

fn cmd_export(a: &ExportArgs) -> Result<i32> {
    let format: GraphFormat = a.format.parse()?;
    let text = load_graph(&a.graph)?.export(format)?;
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
