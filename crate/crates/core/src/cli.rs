//! Run configuration and the `precompute`, `plan` and `simulate` commands.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Environment;
use crate::metaplanner::{grow, init_root, BacktrackMode, MetaPlan, MetaTree};
use crate::simulator::{export_trace, run, ControllerMode, DisturbanceMode, Scenario, SimConfig, SimError, SimSummary};
use crate::suite::{SuiteConfig, SuiteError, TrackingSuite};

pub const ARTIFACTS_ENV: &str = "METAPLAN_ARTIFACTS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("planning failed: {0}")]
    Plan(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where the world comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// Random spheres; the world seed defaults to the run seed.
    RandomSpheres {
        count: usize,
        radius_min: f64,
        radius_max: f64,
        seed: Option<u64>,
    },
    Corridor {
        gap: f64,
    },
    /// A scenario TOML file, relative to the config file.
    File {
        path: PathBuf,
    },
    Inline(Scenario),
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::RandomSpheres {
            count: 10,
            radius_min: 0.5,
            radius_max: 1.5,
            seed: None,
        }
    }
}

impl ScenarioSpec {
    pub fn build(&self, seed: u64, base: &Path) -> Result<Scenario, CliError> {
        Ok(match self {
            ScenarioSpec::RandomSpheres {
                count,
                radius_min,
                radius_max,
                seed: world,
            } => Scenario::random_spheres(world.unwrap_or(seed), *count, (*radius_min, *radius_max)),
            ScenarioSpec::Corridor { gap } => Scenario::corridor(*gap),
            ScenarioSpec::File { path } => {
                let path = base.join(path);
                let text = fs::read_to_string(&path)?;
                toml::from_str(&text).map_err(|source| CliError::Parse { path, source })?
            }
            ScenarioSpec::Inline(s) => s.clone(),
        })
    }
}

/// One file drives the whole pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub suite: SuiteConfig,
    pub scenario: ScenarioSpec,
    pub sim: SimConfig,
    pub out: PathBuf,
    pub artifacts: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            suite: SuiteConfig::default(),
            scenario: ScenarioSpec::default(),
            sim: SimConfig::default(),
            out: PathBuf::from("out"),
            artifacts: PathBuf::from("artifacts"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        let c: Self = toml::from_str(&text).map_err(|source| CliError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        c.validate()?;
        Ok(c)
    }

    /// Checks everything that does not need the precomputed bounds.
    pub fn validate(&self) -> Result<(), CliError> {
        self.suite.validate()?;
        self.sim.validate()?;
        if let ScenarioSpec::RandomSpheres {
            radius_min, radius_max, ..
        } = self.scenario
        {
            if !(radius_min > 0.0 && radius_min <= radius_max) {
                return Err(CliError::Invalid(format!("sphere radii {radius_min}..{radius_max}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "metaplan",
    version,
    about = "Safe meta-planning over a suite of tracked planners"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve and store the bounds and value functions for the planner suite.
    Precompute(Common),
    /// Plan once in the fully known world and write the tree and plan.
    Plan(RunArgs),
    /// Fly the closed loop for one or more seeds.
    Simulate(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Artifact directory (overrides $METAPLAN_ARTIFACTS and the config).
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// `a..b` (inclusive) or a comma list.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<Seeds>,
    #[arg(long)]
    pub controller: Option<ControllerMode>,
    #[arg(long)]
    pub disturbance: Option<DisturbanceMode>,
    #[arg(long)]
    pub backtrack_mode: Option<BacktrackMode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

pub fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let err = |e: std::num::ParseIntError| format!("bad seed list '{s}': {e}");
    if let Some((a, b)) = s.split_once("..") {
        let range: RangeInclusive<u64> = a.trim().parse().map_err(err)?..=b.trim().parse().map_err(err)?;
        if range.is_empty() {
            return Err(format!("empty seed range '{s}'"));
        }
        return Ok(Seeds(range.collect()));
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(err))
        .collect::<Result<_, _>>()
        .map(Seeds)
}

/// Config plus command-line overrides.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub base: PathBuf,
    pub out: PathBuf,
    pub artifacts: PathBuf,
}

impl Common {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let (config, base) = match &self.config {
            Some(p) => (
                RunConfig::load(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (RunConfig::default(), PathBuf::from(".")),
        };
        let artifacts = self
            .artifacts
            .clone()
            .or_else(|| std::env::var_os(ARTIFACTS_ENV).map(PathBuf::from))
            .unwrap_or_else(|| config.artifacts.clone());
        let out = self.out.clone().unwrap_or_else(|| config.out.clone());
        Ok(Resolved {
            config,
            base,
            out,
            artifacts,
        })
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<(Resolved, Vec<u64>), CliError> {
        let mut r = self.common.resolve()?;
        let sim = &mut r.config.sim;
        if let Some(c) = self.controller {
            sim.controller = c;
        }
        if let Some(d) = self.disturbance {
            sim.disturbance = d;
        }
        if let Some(m) = self.backtrack_mode {
            sim.grow.mode = m;
        }
        let seeds = match (&self.seeds, self.seed) {
            (Some(s), _) => s.0.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => vec![sim.seed],
        };
        Ok((r, seeds))
    }
}

/// Result of `precompute`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputeReport {
    pub cached: bool,
    pub dir: PathBuf,
    pub suite: TrackingSuite,
}

pub fn cmd_precompute(r: &Resolved) -> Result<PrecomputeReport, CliError> {
    let (suite, cached) = TrackingSuite::load_or_solve(&r.artifacts, &r.config.suite)?;
    Ok(PrecomputeReport {
        cached,
        dir: r.artifacts.clone(),
        suite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TreeRow {
    id: usize,
    parent: Option<usize>,
    planner: Option<usize>,
    switch_from: Option<usize>,
    x: f64,
    y: f64,
    z: f64,
    arrival_time: f64,
    is_goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub edge: usize,
    pub planner: usize,
    pub switch_from: Option<usize>,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub fn write_tree(tree: &MetaTree, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for n in &tree.nodes {
        w.serialize(TreeRow {
            id: n.id,
            parent: n.parent,
            planner: n.incoming_planner,
            switch_from: n.switch_from,
            x: n.position[0],
            y: n.position[1],
            z: n.position[2],
            arrival_time: n.arrival_time,
            is_goal: n.is_goal,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_plan(plan: &MetaPlan, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    if plan.edges.is_empty() {
        w.write_record(["edge", "planner", "switch_from", "t", "x", "y", "z"])?;
    }
    for (edge, e) in plan.edges.iter().enumerate() {
        for (t, p) in &e.traj.waypoints {
            w.serialize(PlanRow {
                edge,
                planner: e.planner,
                switch_from: e.switch.map(|s| s.from),
                t: *t,
                x: p[0],
                y: p[1],
                z: p[2],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_plan(path: &Path) -> Result<Vec<PlanRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Plans once per seed in the fully known world; writes `tree_<seed>.csv`
/// and `plan_<seed>.csv`.
pub fn cmd_plan(r: &Resolved, seeds: &[u64]) -> Result<Vec<(u64, MetaPlan)>, CliError> {
    let suite = TrackingSuite::load(&r.artifacts, &r.config.suite)?;
    let planners = suite.planner_suite().map_err(SuiteError::from)?;
    fs::create_dir_all(&r.out)?;
    let mut plans = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let sc = r.config.scenario.build(seed, &r.base)?;
        let env = Environment::new(sc.workspace, sc.obstacles.clone(), sc.sensing_radius)
            .map_err(SimError::from)?
            .fully_known();
        let mut tree = init_root(sc.start, planners.slowest(), sc.goal, &planners, &env, seed)
            .map_err(|e| CliError::Plan(e.to_string()))?;
        let plan = grow(&mut tree, &env, &planners, &r.config.sim.grow);
        write_tree(&tree, &r.out.join(format!("tree_{seed}.csv")))?;
        let plan =
            plan.ok_or_else(|| CliError::Plan(format!("no plan to the goal within the budget for seed {seed}")))?;
        write_plan(&plan, &r.out.join(format!("plan_{seed}.csv")))?;
        plans.push((seed, plan));
    }
    Ok(plans)
}

/// Aggregate over a batch of closed-loop runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: usize,
    pub reached_goal: usize,
    pub violation_steps: usize,
    pub collision_steps: usize,
    pub runs_with_violations: usize,
    pub max_bound_ratio: f64,
    pub mean_final_time: f64,
    pub wall_seconds: f64,
    pub mean_run_seconds: f64,
    pub per_seed: Vec<(u64, SimSummary)>,
}

impl BatchSummary {
    pub fn violations(&self) -> usize {
        self.violation_steps + self.collision_steps
    }
}

/// Runs every seed (in parallel); writes `trace_<seed>.csv`,
/// `trace_<seed>_geometry.csv` and `summary.json`.
pub fn cmd_simulate(r: &Resolved, seeds: &[u64]) -> Result<BatchSummary, CliError> {
    let suite = TrackingSuite::load(&r.artifacts, &r.config.suite)?;
    fs::create_dir_all(&r.out)?;
    let started = Instant::now();
    let results: Vec<(u64, SimSummary, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let t = Instant::now();
            let sc = r.config.scenario.build(seed, &r.base)?;
            let cfg = SimConfig { seed, ..r.config.sim };
            let (trace, summary) = run(&sc, &suite, &cfg)?;
            export_trace(&trace, &r.out, &format!("trace_{seed}"))?;
            Ok((seed, summary, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_, CliError>>()?;
    let n = results.len().max(1) as f64;
    let mut b = BatchSummary {
        runs: results.len(),
        wall_seconds: started.elapsed().as_secs_f64(),
        ..Default::default()
    };
    for (seed, s, secs) in results {
        b.reached_goal += s.reached_goal as usize;
        b.violation_steps += s.violation_steps;
        b.collision_steps += s.collision_steps;
        b.runs_with_violations += (s.violation_steps + s.collision_steps > 0) as usize;
        b.max_bound_ratio = b.max_bound_ratio.max(s.max_bound_ratio);
        b.mean_final_time += s.final_time / n;
        b.mean_run_seconds += secs / n;
        b.per_seed.push((seed, s));
    }
    fs::write(r.out.join("summary.json"), serde_json::to_string_pretty(&b)? + "\n")?;
    Ok(b)
}
