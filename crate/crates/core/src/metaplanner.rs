//! Random tree over several kinematic planners.
//!
//! Each extension connects a sample with the fastest planner whose edge is
//! clear under that planner's TEB. A planner downgrade at a waypoint `w`
//! is made safe by virtual backtracking: the edge into `w` is re-timed at the
//! slower speed and validated under the switching bound of the planner used
//! before it. The slowed copy of `w` joins the tree alongside the original.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{PlannerSpeed, Vec3};
use crate::environment::Environment;
use crate::geo_planner::{evaluate, plan_edge, retime, travel_time_lower_bound, PlannerSpec, TimedTrajectory};
use crate::reachability::SafetyBound;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("planner suite is invalid: {0}")]
    InvalidSuite(String),
    #[error("root {position:?} is not clear under the bound of planner {planner}")]
    RootBlocked { position: Vec3, planner: usize },
    #[error("meta-plan failed validation: {0}")]
    Invalid(String),
}

/// Position bound and time needed to switch from a faster planner into a slower one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchBound {
    pub bound: SafetyBound,
    /// Horizon of the switching tube (s).
    pub horizon: f64,
}

/// Planners sorted by decreasing speed, with switching bounds for every
/// downgrade `i → k`, `i < k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSuite {
    pub planners: Vec<PlannerSpec>,
    ssb: Vec<Vec<Option<SwitchBound>>>,
    /// A switch is validated over `span_factor · horizon` seconds.
    pub span_factor: f64,
}

impl PlannerSuite {
    pub fn new(
        planners: Vec<PlannerSpec>,
        ssb: Vec<Vec<Option<SwitchBound>>>,
        span_factor: f64,
    ) -> Result<Self, PlanError> {
        let n = planners.len();
        if n == 0 {
            return Err(PlanError::InvalidSuite("no planners".into()));
        }
        for w in planners.windows(2) {
            if !w[0].speed.strictly_faster_than(&w[1].speed) {
                return Err(PlanError::InvalidSuite(
                    "planners must be sorted by strictly decreasing speed on every axis".into(),
                ));
            }
            if !w[1].teb.within(&w[0].teb) {
                return Err(PlanError::InvalidSuite(
                    "tracking error bounds must shrink with planner speed".into(),
                ));
            }
        }
        if ssb.len() != n || ssb.iter().any(|row| row.len() != n) {
            return Err(PlanError::InvalidSuite("switching table has the wrong shape".into()));
        }
        for (i, row) in ssb.iter().enumerate() {
            for (k, entry) in row.iter().enumerate().skip(i + 1) {
                if entry.is_none() {
                    return Err(PlanError::InvalidSuite(format!("missing switching bound {i} -> {k}")));
                }
            }
        }
        if span_factor.is_nan() || span_factor < 1.0 {
            return Err(PlanError::InvalidSuite("span factor must be at least 1".into()));
        }
        Ok(Self {
            planners,
            ssb,
            span_factor,
        })
    }

    /// Suite whose switching bounds equal the faster planner's TEB, as for
    /// kinematic planners.
    pub fn kinematic(planners: Vec<PlannerSpec>, horizon: f64, span_factor: f64) -> Result<Self, PlanError> {
        let n = planners.len();
        let ssb = (0..n)
            .map(|i| {
                (0..n)
                    .map(|k| {
                        (k > i).then(|| SwitchBound {
                            bound: planners[i].teb,
                            horizon,
                        })
                    })
                    .collect()
            })
            .collect();
        Self::new(planners, ssb, span_factor)
    }

    pub fn len(&self) -> usize {
        self.planners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planners.is_empty()
    }

    pub fn slowest(&self) -> usize {
        self.planners.len() - 1
    }

    pub fn fastest_speed(&self) -> &PlannerSpeed {
        &self.planners[0].speed
    }

    pub fn teb(&self, k: usize) -> &SafetyBound {
        &self.planners[k].teb
    }

    pub fn ssb(&self, from: usize, to: usize) -> &SwitchBound {
        self.ssb[from][to]
            .as_ref()
            .expect("switching bounds exist for every downgrade")
    }

    pub fn set_ssb(&mut self, from: usize, to: usize, s: SwitchBound) {
        self.ssb[from][to] = Some(s);
    }

    /// Time over which a switch must be clear under its bound.
    pub fn span(&self, from: usize, to: usize) -> f64 {
        self.span_factor * self.ssb(from, to).horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BacktrackMode {
    #[default]
    Discard,
    Recursive,
}

impl std::str::FromStr for BacktrackMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "discard" => Ok(Self::Discard),
            "recursive" => Ok(Self::Recursive),
            _ => Err(format!("unknown backtrack mode '{s}' (discard | recursive)")),
        }
    }
}

/// A switch into planner `to` that began at time `start` while the
/// tracker was only known to be within the TEB of planner `from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaNode {
    pub id: usize,
    pub position: Vec3,
    pub parent: Option<usize>,
    pub incoming_planner: Option<usize>,
    pub incoming_traj: Option<TimedTrajectory>,
    /// Planner the incoming edge switched from, when it starts a switch.
    pub switch_from: Option<usize>,
    pub arrival_time: f64,
    /// Switch still in progress on arrival.
    pub transition: Option<Transition>,
    pub needs_slower_mark: Option<usize>,
    pub is_goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    Iterations(usize),
    WallClock(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowConfig {
    pub budget: Budget,
    /// Samples farther than this (fastest-planner time) are pulled in.
    pub steer_time: f64,
    /// Nodes within this fastest-planner time of the goal try to connect.
    pub goal_connect_time: f64,
    pub mode: BacktrackMode,
    /// Probability of sampling the goal itself.
    pub goal_bias: f64,
    /// Besides the nearest node, up to this many nodes within `steer_time`
    /// of the steered target are tried as parents, cheapest first.
    pub parent_candidates: usize,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            budget: Budget::Iterations(2000),
            steer_time: 3.0,
            goal_connect_time: 6.0,
            mode: BacktrackMode::Discard,
            goal_bias: 0.05,
            parent_candidates: 8,
        }
    }
}

/// Samples closer than this to an existing node are skipped (m).
const DUPLICATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MetaTree {
    pub nodes: Vec<MetaNode>,
    /// Planner whose TEB the tracker is in at the root.
    pub root_planner: usize,
    pub goal: Vec3,
    rng: ChaCha8Rng,
    best: Option<(usize, f64)>,
    pub iterations: usize,
}

/// Where a new edge attaches, and whether it starts a switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attach {
    pub parent: usize,
    pub switch_from: Option<usize>,
}

/// Tree with a single root.
///
/// `root_planner` is the planner whose TEB currently holds the tracker: the
/// slowest planner for a fresh start (zero initial error lies in every
/// TEB), the in-flight planner for a replan.
pub fn init_root(
    position: Vec3,
    root_planner: usize,
    goal: Vec3,
    suite: &PlannerSuite,
    env: &Environment,
    seed: u64,
) -> Result<MetaTree, PlanError> {
    if root_planner >= suite.len() {
        return Err(PlanError::InvalidSuite(format!("no planner {root_planner}")));
    }
    if !env.point_clear(&position, suite.teb(root_planner)) {
        return Err(PlanError::RootBlocked {
            position,
            planner: root_planner,
        });
    }
    Ok(MetaTree {
        nodes: vec![MetaNode {
            id: 0,
            position,
            parent: None,
            incoming_planner: None,
            incoming_traj: None,
            switch_from: None,
            arrival_time: 0.0,
            transition: None,
            needs_slower_mark: None,
            is_goal: false,
        }],
        root_planner,
        goal,
        rng: ChaCha8Rng::seed_from_u64(seed),
        best: None,
        iterations: 0,
    })
}

/// Root position for a replan: the reference position `budget` seconds ahead.
pub fn predict_root(traj: &TimedTrajectory, t_now: f64, budget: f64) -> Vec3 {
    evaluate(traj, t_now + budget).0
}

impl MetaTree {
    pub fn root(&self) -> &MetaNode {
        &self.nodes[0]
    }

    pub fn best_time(&self) -> Option<f64> {
        self.best.map(|b| b.1)
    }

    pub fn best_goal(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }

    /// Planner whose TEB holds the tracker on arrival at `id`, ignoring switches.
    pub fn incoming_planner(&self, id: usize) -> usize {
        self.nodes[id].incoming_planner.unwrap_or(self.root_planner)
    }

    /// Switch still running on arrival at `id`.
    pub fn active_transition(&self, id: usize, suite: &PlannerSuite) -> Option<Transition> {
        let n = &self.nodes[id];
        n.transition
            .filter(|tr| n.arrival_time - tr.start < suite.span(tr.from, tr.to))
    }

    /// Non-goal node closest in fastest-planner travel time.
    pub fn nearest(&self, p: &Vec3, speed: &PlannerSpeed) -> usize {
        let mut best = (0, f64::INFINITY);
        for n in self.nodes.iter().filter(|n| !n.is_goal) {
            let d = travel_time_lower_bound(&n.position, p, speed);
            if d < best.1 {
                best = (n.id, d);
            }
        }
        best.0
    }

    /// Adds `traj` (any start time) as an edge out of `parent`, validating
    /// the switching bound for a switch that starts here or is still
    /// running at `parent`.
    pub fn add_edge(
        &mut self,
        parent: usize,
        traj: &TimedTrajectory,
        switch_from: Option<usize>,
        suite: &PlannerSuite,
        env: &Environment,
    ) -> Option<usize> {
        let k = traj.planner;
        let p = &self.nodes[parent];
        let traj = traj.starting_at(p.arrival_time);
        let transition = match switch_from {
            Some(from) => Some(Transition {
                from,
                to: k,
                start: p.arrival_time,
            }),
            None => self.active_transition(parent, suite).filter(|tr| tr.to == k),
        };
        if let Some(tr) = transition {
            let left = tr.start + suite.span(tr.from, tr.to) - traj.start_time();
            let part = traj.window(traj.start_time(), traj.start_time() + left);
            if !part.clear(&suite.ssb(tr.from, tr.to).bound, env) {
                return None;
            }
        }
        let id = self.nodes.len();
        let arrival = traj.end_time();
        self.nodes.push(MetaNode {
            id,
            position: traj.end(),
            parent: Some(parent),
            incoming_planner: Some(k),
            switch_from,
            arrival_time: arrival,
            transition,
            needs_slower_mark: None,
            is_goal: false,
            incoming_traj: Some(traj),
        });
        Some(id)
    }

    fn update_best(&mut self, id: usize) {
        let t = self.nodes[id].arrival_time;
        if self.best.is_none_or(|b| t < b.1) {
            self.best = Some((id, t));
        }
    }
}

/// Step 2: the first planner, fastest first, whose edge is clear under its TEB.
pub fn connect(from: &Vec3, to: &Vec3, suite: &PlannerSuite, env: &Environment) -> Option<TimedTrajectory> {
    suite
        .planners
        .iter()
        .enumerate()
        .find_map(|(k, spec)| plan_edge(from, to, k, spec, env).ok())
}

/// Step 3: decides where an edge of planner `k` leaving waypoint `w` may
/// attach. Downgrades slow the edge into `w` (adding the slowed copy of
/// `w` to the tree) and validate the switch under the faster planner's SSB.
pub fn virtual_backtrack(
    tree: &mut MetaTree,
    w: usize,
    k: usize,
    suite: &PlannerSuite,
    env: &Environment,
    mode: BacktrackMode,
) -> Option<Attach> {
    if let Some(tr) = tree.active_transition(w, suite) {
        // tracker may still be anywhere in TEB_from
        return (k == tr.to || k <= tr.from).then_some(Attach {
            parent: w,
            switch_from: None,
        });
    }
    let j = tree.incoming_planner(w);
    if j >= k {
        return Some(Attach {
            parent: w,
            switch_from: None,
        });
    }
    let Some(v) = tree.nodes[w].parent else {
        // nothing to slow before the root: the new edge carries the switch
        return Some(Attach {
            parent: w,
            switch_from: Some(j),
        });
    };
    let i = tree.incoming_planner(v);
    let slowed = retime(
        tree.nodes[w].incoming_traj.as_ref().expect("non-root nodes have edges"),
        k,
        &suite.planners[k].speed,
    );
    let switch = (i < k).then_some(i);
    if tree.active_transition(v, suite).is_none() {
        if let Some(id) = tree.add_edge(v, &slowed, switch, suite, env) {
            return Some(Attach {
                parent: id,
                switch_from: None,
            });
        }
    }
    if mode == BacktrackMode::Discard {
        return None;
    }
    tree.nodes[v].needs_slower_mark = Some(k);
    let up = virtual_backtrack(tree, v, k, suite, env, mode)?;
    let id = tree.add_edge(up.parent, &slowed, up.switch_from, suite, env)?;
    Some(Attach {
        parent: id,
        switch_from: None,
    })
}

/// Rejects samples through which no path can beat `best_time`.
pub fn informed_reject(
    sample: &Vec3,
    root: &Vec3,
    goal: &Vec3,
    best_time: Option<f64>,
    fastest: &PlannerSpeed,
) -> bool {
    match best_time {
        None => false,
        Some(best) => {
            travel_time_lower_bound(root, sample, fastest) + travel_time_lower_bound(sample, goal, fastest) >= best
        }
    }
}

/// Connect, backtrack and insert. Returns the new node.
pub fn extend(
    tree: &mut MetaTree,
    w: usize,
    target: &Vec3,
    suite: &PlannerSuite,
    env: &Environment,
    mode: BacktrackMode,
) -> Option<usize> {
    let edge = connect(&tree.nodes[w].position, target, suite, env)?;
    let at = virtual_backtrack(tree, w, edge.planner, suite, env, mode)?;
    tree.add_edge(at.parent, &edge, at.switch_from, suite, env)
}

fn try_goal(tree: &mut MetaTree, from: usize, suite: &PlannerSuite, env: &Environment, cfg: &GrowConfig) {
    let goal = tree.goal;
    let lb = travel_time_lower_bound(&tree.nodes[from].position, &goal, suite.fastest_speed());
    if lb > cfg.goal_connect_time {
        return;
    }
    if let Some(best) = tree.best_time() {
        if tree.nodes[from].arrival_time + lb >= best {
            return;
        }
    }
    if lb < DUPLICATE_EPS {
        if !tree.nodes[from].is_goal && from == 0 {
            tree.nodes[0].is_goal = true;
            tree.update_best(0);
        }
        return;
    }
    if let Some(id) = extend(tree, from, &goal, suite, env, cfg.mode) {
        tree.nodes[id].is_goal = true;
        tree.update_best(id);
    }
}

/// Nodes to try as the parent of `target`, by optimistic arrival time at
/// the fastest speeds. Always includes the nearest node `w`.
fn parent_candidates(tree: &MetaTree, w: usize, target: &Vec3, fastest: &PlannerSpeed, cfg: &GrowConfig) -> Vec<usize> {
    let cost = |n: &MetaNode| n.arrival_time + travel_time_lower_bound(&n.position, target, fastest);
    let mut near: Vec<(f64, usize)> = tree
        .nodes
        .iter()
        .filter(|n| !n.is_goal && n.id != w && travel_time_lower_bound(&n.position, target, fastest) <= cfg.steer_time)
        .map(|n| (cost(n), n.id))
        .collect();
    near.push((cost(&tree.nodes[w]), w));
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = cfg.parent_candidates.max(1);
    let mut out: Vec<usize> = near.iter().take(keep).map(|c| c.1).collect();
    if !out.contains(&w) {
        out.push(w);
    }
    out
}

/// Samples, extends and connects to the goal until the budget runs out;
/// returns the best plan found.
pub fn grow(tree: &mut MetaTree, env: &Environment, suite: &PlannerSuite, cfg: &GrowConfig) -> Option<MetaPlan> {
    let started = Instant::now();
    let fastest = *suite.fastest_speed();
    if tree.iterations == 0 {
        try_goal(tree, 0, suite, env, cfg);
    }
    loop {
        let done = match cfg.budget {
            Budget::Iterations(n) => tree.iterations >= n,
            Budget::WallClock(d) => started.elapsed() >= d,
        };
        if done {
            break;
        }
        tree.iterations += 1;
        let sample = if tree.rng.gen_bool(cfg.goal_bias.clamp(0.0, 1.0)) {
            tree.goal
        } else {
            env.workspace.sample(&mut tree.rng)
        };
        let root = tree.root().position;
        if informed_reject(&sample, &root, &tree.goal, tree.best_time(), &fastest) {
            continue;
        }
        let w = tree.nearest(&sample, &fastest);
        let from = tree.nodes[w].position;
        let lb = travel_time_lower_bound(&from, &sample, &fastest);
        let target: Vec3 = if lb > cfg.steer_time {
            let s = cfg.steer_time / lb;
            std::array::from_fn(|a| from[a] + s * (sample[a] - from[a]))
        } else {
            sample
        };
        let gap = (0..3).map(|a| (target[a] - from[a]).abs()).fold(0.0, f64::max);
        if gap < DUPLICATE_EPS {
            continue;
        }
        let added = parent_candidates(tree, w, &target, &fastest, cfg)
            .into_iter()
            .find_map(|v| extend(tree, v, &target, suite, env, cfg.mode));
        if let Some(id) = added {
            try_goal(tree, id, suite, env, cfg);
        }
    }
    tree.best_goal().map(|g| extract_plan(tree, g, suite))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub from: usize,
    pub to: usize,
    pub bound: SafetyBound,
    /// Time from the start of this edge over which the bound was checked.
    pub span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub planner: usize,
    pub traj: TimedTrajectory,
    pub switch: Option<SwitchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPlan {
    pub root_planner: usize,
    pub edges: Vec<PlanEdge>,
    pub total_time: f64,
}

impl MetaPlan {
    pub fn empty(root_planner: usize) -> Self {
        Self {
            root_planner,
            edges: Vec::new(),
            total_time: 0.0,
        }
    }

    pub fn planners_used(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges.iter().map(|e| e.planner).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Root-to-`goal` chain of edges with their switch records.
pub fn extract_plan(tree: &MetaTree, goal: usize, suite: &PlannerSuite) -> MetaPlan {
    let mut edges = Vec::new();
    let mut id = goal;
    while let Some(parent) = tree.nodes[id].parent {
        let n = &tree.nodes[id];
        let traj = n.incoming_traj.clone().expect("non-root nodes have edges");
        let planner = traj.planner;
        edges.push(PlanEdge {
            planner,
            switch: n.switch_from.map(|from| SwitchRecord {
                from,
                to: planner,
                bound: suite.ssb(from, planner).bound,
                span: suite.span(from, planner),
            }),
            traj,
        });
        id = parent;
    }
    edges.reverse();
    MetaPlan {
        root_planner: tree.root_planner,
        total_time: tree.nodes[goal].arrival_time,
        edges,
    }
}

/// Re-checks an emitted plan: continuity, every edge under its own TEB,
/// every downgrade carrying a switch record, and every switch window under
/// its switching bound.
pub fn validate_plan(plan: &MetaPlan, suite: &PlannerSuite, env: &Environment) -> Result<(), PlanError> {
    let fail = |m: String| Err(PlanError::Invalid(m));
    let mut prev = plan.root_planner;
    let mut t = plan.edges.first().map_or(0.0, |e| e.traj.start_time());
    for (n, e) in plan.edges.iter().enumerate() {
        if n > 0 {
            let before = &plan.edges[n - 1].traj;
            if before.end() != e.traj.start() || before.end_time() != e.traj.start_time() {
                return fail(format!("edge {n} does not continue its predecessor"));
            }
        }
        if !e.traj.clear(suite.teb(e.planner), env) {
            return fail(format!("edge {n} is not clear under its TEB"));
        }
        let speeds = suite.planners[e.planner].speed.as_array();
        if e.traj.max_speeds().iter().zip(&speeds).any(|(v, b)| *v > b + 1e-9) {
            return fail(format!("edge {n} exceeds planner {} speeds", e.planner));
        }
        if let Some(sw) = e.switch {
            let end = e.traj.start_time() + sw.span;
            for later in &plan.edges[n..] {
                if later.traj.start_time() >= end || later.planner != sw.to {
                    break;
                }
                let part = later.traj.window(later.traj.start_time(), end);
                if !part.clear(&sw.bound, env) {
                    return fail(format!("switch at edge {n} is not clear under its bound"));
                }
            }
        } else if e.planner > prev {
            return fail(format!(
                "downgrade {prev} -> {} at edge {n} has no switch record",
                e.planner
            ));
        }
        prev = e.planner;
        t += e.traj.duration();
    }
    if (t - plan.edges.first().map_or(0.0, |e| e.traj.start_time()) - plan.total_time).abs() > 1e-6 {
        return fail("total time does not match edge durations".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Obstacle, Workspace};

    fn suite() -> PlannerSuite {
        let mk = |s: f64, e: f64| PlannerSpec {
            speed: PlannerSpeed::new(s, s, s).unwrap(),
            teb: SafetyBound::uniform(e),
        };
        PlannerSuite::kinematic(vec![mk(1.0, 0.6), mk(0.5, 0.3), mk(0.25, 0.15)], 1.0, 1.5).unwrap()
    }

    fn world(obstacles: Vec<Obstacle>) -> Environment {
        Environment::new(
            Workspace::new([0.0, 0.0, 0.0], [20.0, 10.0, 3.0]).unwrap(),
            obstacles,
            5.0,
        )
        .unwrap()
        .fully_known()
    }

    #[test]
    fn suite_validation() {
        let s = suite();
        let mut p = s.planners.clone();
        p.swap(0, 1);
        assert!(PlannerSuite::kinematic(p, 1.0, 1.5).is_err());
        let mut p = s.planners.clone();
        p[2].teb = SafetyBound::uniform(0.5);
        assert!(PlannerSuite::kinematic(p, 1.0, 1.5).is_err());
        let n = s.len();
        assert!(PlannerSuite::new(s.planners.clone(), vec![vec![None; n]; n], 1.5).is_err());
    }

    #[test]
    fn empty_world_single_fast_edge() {
        let env = world(vec![]);
        let s = suite();
        let (a, g) = ([2.0, 2.0, 1.5], [18.0, 8.0, 1.5]);
        let mut tree = init_root(a, s.slowest(), g, &s, &env, 1).unwrap();
        let cfg = GrowConfig {
            goal_connect_time: f64::INFINITY,
            ..GrowConfig::default()
        };
        let plan = grow(&mut tree, &env, &s, &cfg).unwrap();
        assert_eq!(plan.planners_used(), vec![0]);
        let lb = travel_time_lower_bound(&a, &g, s.fastest_speed());
        assert!(plan.total_time >= lb - 1e-9);
        assert!(plan.total_time <= lb + 1e-9, "direct connection expected");
        validate_plan(&plan, &s, &env).unwrap();
    }

    #[test]
    fn root_at_goal_is_empty_plan() {
        let env = world(vec![]);
        let s = suite();
        let p = [5.0, 5.0, 1.5];
        let mut tree = init_root(p, 2, p, &s, &env, 0).unwrap();
        let cfg = GrowConfig {
            budget: Budget::Iterations(10),
            ..Default::default()
        };
        let plan = grow(&mut tree, &env, &s, &cfg).unwrap();
        assert!(plan.edges.is_empty());
        assert_eq!(plan.total_time, 0.0);
    }

    #[test]
    fn blocked_root_is_reported() {
        let env = world(vec![Obstacle::new([5.0, 5.0, 1.5], 1.0)]);
        assert!(matches!(
            init_root([5.0, 5.0, 1.5], 2, [1.0; 3], &suite(), &env, 0),
            Err(PlanError::RootBlocked { .. })
        ));
    }

    #[test]
    fn replan_root_is_predicted_downstream() {
        let env = world(vec![]);
        let spec = PlannerSpec {
            speed: PlannerSpeed::new(1.5, 1.5, 1.5).unwrap(),
            teb: SafetyBound::uniform(0.2),
        };
        let t = plan_edge(&[1.0, 5.0, 1.5], &[10.0, 5.0, 1.5], 0, &spec, &env).unwrap();
        let root = predict_root(&t, 2.0, 1.0);
        assert!((root[0] - (1.0 + 1.5 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn connect_cascade() {
        let s = suite();
        let free = world(vec![]);
        assert_eq!(
            connect(&[2.0, 5.0, 1.5], &[8.0, 5.0, 1.5], &s, &free).unwrap().planner,
            0
        );
        // gap of half-width 0.45 between two spheres
        let gap = world(vec![
            Obstacle::new([5.0, 5.0 + 0.45 + 1.0, 1.5], 1.0),
            Obstacle::new([5.0, 5.0 - 0.45 - 1.0, 1.5], 1.0),
        ]);
        assert_eq!(
            connect(&[2.0, 5.0, 1.5], &[8.0, 5.0, 1.5], &s, &gap).unwrap().planner,
            1
        );
        let tight = world(vec![
            Obstacle::new([5.0, 5.0 + 0.2 + 1.0, 1.5], 1.0),
            Obstacle::new([5.0, 5.0 - 0.2 - 1.0, 1.5], 1.0),
        ]);
        assert_eq!(
            connect(&[2.0, 5.0, 1.5], &[8.0, 5.0, 1.5], &s, &tight).unwrap().planner,
            2
        );
        let inside = world(vec![Obstacle::new([8.0, 5.0, 1.5], 0.5)]);
        assert!(connect(&[2.0, 5.0, 1.5], &[8.0, 5.0, 1.5], &s, &inside).is_none());
    }

    #[test]
    fn same_or_slower_predecessor_needs_no_switch() {
        let env = world(vec![]);
        let s = suite();
        let mut tree = init_root([2.0, 5.0, 1.5], 2, [18.0, 5.0, 1.5], &s, &env, 0).unwrap();
        let e = plan_edge(&[2.0, 5.0, 1.5], &[4.0, 5.0, 1.5], 1, &s.planners[1], &env).unwrap();
        let w = tree.add_edge(0, &e, None, &s, &env).unwrap();
        for k in [0, 1] {
            let at = virtual_backtrack(&mut tree, w, k, &s, &env, BacktrackMode::Discard).unwrap();
            assert_eq!(
                at,
                Attach {
                    parent: w,
                    switch_from: None
                }
            );
        }
        assert_eq!(tree.nodes.len(), 2);
    }

    #[test]
    fn informed_rejection_geometry() {
        let f = PlannerSpeed::new(1.0, 1.0, 1.0).unwrap();
        let (root, goal) = ([0.0; 3], [10.0, 0.0, 0.0]);
        assert!(!informed_reject(&[5.0, 0.0, 0.0], &root, &goal, None, &f));
        assert!(!informed_reject(&[5.0, 0.0, 0.0], &root, &goal, Some(10.5), &f));
        assert!(informed_reject(&[5.0, 8.0, 0.0], &root, &goal, Some(12.0), &f));
    }
}
