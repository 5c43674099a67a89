//! Command-line launcher: loads the world and config, wires the stack and runs
//! single episodes, suites, replays or a topology dump.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::bus::{Edge, EdgeKind};
use crate::config::{ConfigError, FlatConfig};
use crate::eval::{
    load_log, replay, run_suite, success, trajectory_svg, write_report, EvalError, ReportOptions, SuiteConfig,
};
use crate::policies::{VlvConfig, POLICY_NAMES};
use crate::sim_world::{load_world, Category, WorldError, WorldMap};
use crate::stack::{expected_topology, BusModeName, Stack, StackConfig, StackError};
use crate::vsn_core::VsnConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("replayed final pose is off by {position:.4} m / {heading:.3} deg, beyond the {bound_m:.4} m / {bound_deg:.3} deg bound")]
    ReplayDrift {
        position: f64,
        heading: f64,
        bound_m: f64,
        bound_deg: f64,
    },
}

#[derive(Debug, Parser)]
#[command(name = "navstack", version, about = "Object-goal navigation stack on a simulated differential-drive robot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its log and plot.
    Run(RunArgs),
    /// Run every start for every category and write a success report.
    Suite(SuiteArgs),
    /// Re-execute a logged action sequence open loop and compare final poses.
    Replay(ReplayArgs),
    /// Print the wired node graph.
    Topology(TopologyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// World JSON file.
    #[arg(long)]
    pub world: PathBuf,
    /// Flat `section.key: value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output root; each run writes into its own subdirectory.
    #[arg(long, env = "NAVSTACK_OUT", default_value = "runs")]
    pub out: PathBuf,
    /// Force the deterministic single-threaded scheduler.
    #[arg(long)]
    pub lockstep: bool,
    /// Override the per-episode action limit.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Token file (one action per line) for the `external` policy.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "vlv")]
    pub policy: String,
    #[arg(long)]
    pub target: Category,
    /// 1-based start index.
    #[arg(long, default_value_t = 1)]
    pub start: usize,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "vlv")]
    pub policy: String,
    /// Comma-separated categories; all categories present in the world by default.
    #[arg(long, value_delimiter = ',')]
    pub categories: Vec<Category>,
    /// A 1-based start index, or `all`.
    #[arg(long, default_value = "all")]
    pub start: String,
    /// Episodes run concurrently, each on its own stack.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Episode log written by `run` or `suite`.
    pub log: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the re-rendered plot; next to the log by default.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Which episodes to run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunMode {
    Single { target: Category, start: usize },
    Suite { categories: Vec<Category>, starts: Vec<usize> },
}

/// Everything a `run` or `suite` invocation resolves to.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub world_path: PathBuf,
    pub policy: String,
    pub mode: RunMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub parallel: usize,
    pub stack: StackConfig,
    pub vsn: VsnConfig,
    pub vlv: VlvConfig,
    pub script: Option<Vec<String>>,
}

impl RunConfig {
    /// Directory for this invocation's outputs, named after the episode grid
    /// and the seed.
    pub fn run_dir(&self) -> PathBuf {
        let name = match &self.mode {
            RunMode::Single { target, start } => format!("run-{}-{}-s{:02}-seed{}", self.policy, target, start, self.seed),
            RunMode::Suite { .. } => format!("suite-{}-seed{}", self.policy, self.seed),
        };
        self.out_dir.join(name)
    }

    pub fn suite_config(&self, world: &WorldMap) -> SuiteConfig {
        let (categories, starts) = match &self.mode {
            RunMode::Single { target, start } => (vec![*target], vec![*start]),
            RunMode::Suite { categories, starts } => {
                let cats = if categories.is_empty() {
                    world.categories()
                } else {
                    categories.clone()
                };
                (cats, starts.clone())
            }
        };
        SuiteConfig {
            policy: self.policy.clone(),
            categories,
            starts,
            seed: self.seed,
            parallel: self.parallel.max(1),
            stack: self.stack.clone(),
            vsn: self.vsn.clone(),
            vlv: self.vlv,
            script: self.script.clone(),
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<FlatConfig, CliError> {
    Ok(match path {
        Some(p) => FlatConfig::load(p)?,
        None => FlatConfig::default(),
    })
}

fn resolve(common: &Common, policy: &str, mode: RunMode, parallel: usize) -> Result<RunConfig, CliError> {
    if !POLICY_NAMES.contains(&policy) {
        return Err(CliError::Usage(format!(
            "unknown policy {policy:?}; expected one of {}",
            POLICY_NAMES.join(", ")
        )));
    }
    let flat = read_config(common.config.as_deref())?;
    let mut stack = StackConfig::default();
    stack.apply(&flat)?;
    if common.lockstep {
        stack.bus_mode = BusModeName::Lockstep;
    }
    let mut vsn = VsnConfig::from_config(&flat, None)?;
    if let Some(n) = common.max_steps {
        if n == 0 {
            return Err(CliError::Usage("--max-steps must be at least 1".into()));
        }
        vsn.max_steps = n;
    }
    let mut vlv = VlvConfig::default();
    vlv.apply(&flat)?;
    let script = match &common.script {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.display().to_string(),
                source,
            })?;
            Some(text.split_whitespace().map(str::to_string).collect())
        }
        None => None,
    };
    if policy == "external" && script.is_none() {
        return Err(CliError::Usage("the external policy needs --script".into()));
    }
    Ok(RunConfig {
        world_path: common.world.clone(),
        policy: policy.to_string(),
        mode,
        seed: common.seed,
        out_dir: common.out.clone(),
        parallel,
        stack,
        vsn,
        vlv,
        script,
    })
}

impl RunArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let mode = RunMode::Single {
            target: self.target,
            start: self.start,
        };
        resolve(&self.common, &self.policy, mode, 1)
    }
}

impl SuiteArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let starts = if self.start.eq_ignore_ascii_case("all") {
            Vec::new()
        } else {
            vec![self
                .start
                .parse()
                .map_err(|_| CliError::Usage(format!("--start expects an index or `all`, got {:?}", self.start)))?]
        };
        let mode = RunMode::Suite {
            categories: self.categories.clone(),
            starts,
        };
        resolve(&self.common, &self.policy, mode, self.parallel)
    }
}

/// What `run` and `suite` report back.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub report_path: PathBuf,
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
}

/// Load the world, run the configured episodes and write their outputs.
pub fn execute(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let world = Arc::new(load_world(&cfg.world_path)?);
    let suite = cfg.suite_config(&world);
    let (report, logs) = run_suite(&world, &suite)?;
    let run_dir = cfg.run_dir();
    let report_path = write_report(
        &report,
        &logs,
        &world,
        &run_dir,
        ReportOptions {
            store_frames: cfg.vsn.keep_observations,
        },
    )?;
    Ok(RunSummary {
        run_dir,
        report_path,
        episodes: report.overall.episodes,
        successes: report.overall.successes,
        sr: report.overall.sr,
    })
}

/// Replay a log; fails when the final pose drifts beyond the bound.
pub fn cmd_replay(args: &ReplayArgs) -> Result<String, CliError> {
    let world = Arc::new(load_world(&args.world)?);
    let mut stack = StackConfig::default();
    stack.apply(&read_config(args.config.as_deref())?)?;
    let log = load_log(&args.log)?;
    let outcome = replay(&log, &world, &stack)?;
    let plot = args.plot.clone().unwrap_or_else(|| args.log.with_extension("replay.svg"));
    let mut replayed = log.clone();
    replayed.trajectory = outcome.trajectory.clone();
    std::fs::write(&plot, trajectory_svg(&replayed, &world)).map_err(|source| CliError::Io {
        path: plot.display().to_string(),
        source,
    })?;
    if !outcome.within_bound() {
        return Err(CliError::ReplayDrift {
            position: outcome.position_error,
            heading: outcome.heading_error,
            bound_m: outcome.position_bound,
            bound_deg: outcome.heading_bound,
        });
    }
    Ok(format!(
        "replayed {} actions: final pose off by {:.4} m / {:.3} deg (bound {:.4} m / {:.3} deg); plot {}\n",
        log.actions.len(),
        outcome.position_error,
        outcome.heading_error,
        outcome.position_bound,
        outcome.heading_bound,
        plot.display()
    ))
}

/// Wire a full stack with a navigation session and list its edges.
pub fn topology_dump(world: Arc<WorldMap>, stack_cfg: &StackConfig) -> Result<Vec<Edge>, CliError> {
    let start = world
        .starts
        .first()
        .copied()
        .ok_or_else(|| CliError::Usage("world has no start poses".into()))?;
    let stack = Stack::launch(world, start, stack_cfg)?;
    let _session = stack.vsn_session(VsnConfig::default())?;
    Ok(stack.topology().edges.into_iter().collect())
}

fn kind_label(k: EdgeKind) -> &'static str {
    match k {
        EdgeKind::Publishes => "publishes",
        EdgeKind::Subscribes => "subscribes",
        EdgeKind::Serves => "serves",
        EdgeKind::Calls => "calls",
    }
}

fn cmd_topology(args: &TopologyArgs) -> Result<String, CliError> {
    let world = Arc::new(load_world(&args.world)?);
    let mut stack = StackConfig::default();
    stack.apply(&read_config(args.config.as_deref())?)?;
    let edges = topology_dump(world, &stack)?;
    let mut out = String::new();
    for e in &edges {
        out.push_str(&format!("{} {} {}\n", e.node, kind_label(e.kind), e.name));
    }
    let missing: Vec<_> = expected_topology()
        .into_iter()
        .filter(|(n, k, name)| !edges.iter().any(|e| e.node == *n && e.kind == *k && e.name == *name))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!("wired graph lacks {missing:?}")));
    }
    Ok(out)
}

fn describe(summary: &RunSummary, cfg: &RunConfig) -> Result<String, CliError> {
    let mut text = format!(
        "{} episode(s), {} succeeded, SR {:.2}%\nreport: {}\n",
        summary.episodes,
        summary.successes,
        summary.sr,
        summary.report_path.display()
    );
    if let RunMode::Single { .. } = cfg.mode {
        let world = load_world(&cfg.world_path)?;
        let dir = summary.run_dir.join("episodes");
        if let Some(entry) = std::fs::read_dir(&dir).ok().and_then(|mut d| d.next()).and_then(Result::ok) {
            let log = load_log(&entry.path())?;
            text.push_str(&format!(
                "status {:?}, {} actions, {:.2} m from the nearest {}, success={}\n",
                log.status,
                log.actions.len(),
                log.final_distance_to_target,
                log.target,
                success(&log, &world)
            ));
        }
    }
    Ok(text)
}

/// Dispatch a parsed command line. Navigation failures are results, not
/// errors; only configuration, world and I/O problems return `Err`.
pub fn dispatch(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(a) => {
            let cfg = a.config()?;
            let summary = execute(&cfg)?;
            describe(&summary, &cfg)
        }
        Command::Suite(a) => {
            let cfg = a.config()?;
            let summary = execute(&cfg)?;
            describe(&summary, &cfg)
        }
        Command::Replay(a) => cmd_replay(a),
        Command::Topology(a) => cmd_topology(a),
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
