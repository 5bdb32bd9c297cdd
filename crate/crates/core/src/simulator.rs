//! Closed-loop flight: the tracker follows the active meta-plan under
//! disturbance, sensing obstacles and replanning from a predicted root.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{lqr_control, supervise, switching_control, AxisMode, SafetyController};
use crate::dynamics::{
    accel_to_control, lift_and_subtract, step_tracker, Disturbance6, DynamicsError, RelativeState2, TrackingControl,
    TrackingState6, Vec3,
};
use crate::environment::{sensing_minimum, EnvError, Environment, Obstacle, Workspace};
use crate::geo_planner::{evaluate, TimedTrajectory};
use crate::metaplanner::{grow, init_root, validate_plan, GrowConfig, MetaPlan, PlanEdge, PlannerSuite};
use crate::reachability::{SafetyBound, ValueFunction2D};
use crate::suite::TrackingSuite;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("suite: {0}")]
    Suite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceMode {
    None,
    #[default]
    Random,
    Adversarial,
}

impl std::str::FromStr for DisturbanceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "random" => Ok(Self::Random),
            "adversarial" => Ok(Self::Adversarial),
            _ => Err(format!("unknown disturbance mode '{s}' (none | random | adversarial)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    #[default]
    Optimal,
    Lqr,
}

impl std::str::FromStr for ControllerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimal" => Ok(Self::Optimal),
            "lqr" => Ok(Self::Lqr),
            _ => Err(format!("unknown controller '{s}' (optimal | lqr)")),
        }
    }
}

/// World, start and goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub workspace: Workspace,
    pub obstacles: Vec<Obstacle>,
    pub sensing_radius: f64,
    pub start: Vec3,
    pub goal: Vec3,
}

impl Scenario {
    /// `n` random spheres kept clear of the start and goal.
    pub fn random_spheres(seed: u64, n: usize, radius: (f64, f64)) -> Self {
        let workspace = Workspace {
            lo: [0.0, 0.0, 0.0],
            hi: [20.0, 10.0, 3.0],
        };
        let start = [1.5, 1.5, 1.5];
        let goal = [18.5, 8.5, 1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obstacles = Vec::with_capacity(n);
        while obstacles.len() < n {
            let r = rng.gen_range(radius.0..=radius.1);
            let c: Vec3 = [
                rng.gen_range(3.0..17.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..3.0),
            ];
            let o = Obstacle::new(c, r);
            if o.surface_distance(&start) > 1.5 && o.surface_distance(&goal) > 1.5 {
                obstacles.push(o);
            }
        }
        Self {
            workspace,
            obstacles,
            sensing_radius: 4.0,
            start,
            goal,
        }
    }

    /// Two large spheres that touch the workspace floor and ceiling, leaving
    /// only a gap of half-width `gap` around `x = 10, y = 5`.
    pub fn corridor(gap: f64) -> Self {
        let big = 5.0;
        Self {
            workspace: Workspace {
                lo: [0.0, 0.0, 0.0],
                hi: [20.0, 10.0, 2.0],
            },
            obstacles: vec![
                Obstacle::new([10.0, 5.0 - gap - big, 1.0], big),
                Obstacle::new([10.0, 5.0 + gap + big, 1.0], big),
            ],
            sensing_radius: 4.0,
            start: [2.0, 5.0, 1.0],
            goal: [18.0, 5.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub disturbance: DisturbanceMode,
    pub controller: ControllerMode,
    /// Simulated planning time per replan (s).
    pub replan_budget: f64,
    pub seed: u64,
    /// Per-axis goal tolerance (m).
    pub goal_tolerance: f64,
    /// After the reference stops at the goal, the run also ends once this
    /// much time has passed with the tracker inside its bound (s).
    pub settle_time: f64,
    pub grow: GrowConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 60.0,
            disturbance: DisturbanceMode::Random,
            controller: ControllerMode::Optimal,
            replan_budget: 1.0,
            seed: 0,
            goal_tolerance: 0.1,
            settle_time: 2.0,
            grow: GrowConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0
            && self.horizon > 0.0
            && self.replan_budget >= 0.0
            && self.goal_tolerance > 0.0
            && self.settle_time >= 0.0)
        {
            return Err(SimError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: f64,
    pub tracker: TrackingState6,
    pub reference: Vec3,
    pub reference_vel: Vec3,
    pub rel: [RelativeState2; 3],
    pub planner: usize,
    pub bound: SafetyBound,
    pub control: TrackingControl,
    pub disturbance: Disturbance6,
    pub value: Vec3,
    pub teb_violation: bool,
    pub collision: bool,
    pub replanning: bool,
    pub switching: bool,
    pub emergency: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimSummary {
    pub steps: usize,
    pub final_time: f64,
    pub reached_goal: bool,
    pub violation_steps: usize,
    pub collision_steps: usize,
    pub replans: usize,
    pub fallbacks: usize,
    /// Largest `|r| / bound` over all steps and axes.
    pub max_bound_ratio: f64,
    pub planners_used: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub records: Vec<SimRecord>,
    pub obstacles: Vec<Obstacle>,
    /// Every plan that was executed, with absolute times.
    pub plans: Vec<MetaPlan>,
}

/// Worst-case disturbance against value function `vf`: maximises
/// `-p_r dv - p_v da`, ties to the positive bound.
pub fn adversarial_disturbance(rel: RelativeState2, vf: &ValueFunction2D) -> (f64, f64) {
    let p = &vf.params;
    let (pr, pv) = vf.value_and_gradient(rel).map(|s| (s.dr, s.dv)).unwrap_or((0.0, 0.0));
    let dv = if pr > 0.0 { -p.dv_max } else { p.dv_max };
    let da = if pv > 0.0 { -p.da_max } else { p.da_max };
    (dv, da)
}

/// Reference the tracker follows: plan edges with absolute times, then a hold.
#[derive(Debug, Clone, PartialEq)]
struct Reference {
    edges: Vec<PlanEdge>,
    hold: Vec3,
    hold_planner: usize,
    at_goal: bool,
}

impl Reference {
    fn holding(p: Vec3, planner: usize) -> Self {
        Self {
            edges: Vec::new(),
            hold: p,
            hold_planner: planner,
            at_goal: false,
        }
    }

    fn end_time(&self) -> f64 {
        self.edges.last().map_or(f64::NEG_INFINITY, |e| e.traj.end_time())
    }

    /// Index of the edge active at `t` (last edge whose start is ≤ t).
    fn edge_at(&self, t: f64) -> Option<usize> {
        if t >= self.end_time() {
            return None;
        }
        let k = self.edges.partition_point(|e| e.traj.start_time() <= t);
        k.checked_sub(1)
    }

    fn eval(&self, t: f64) -> (Vec3, Vec3, Option<usize>, usize) {
        match self.edge_at(t) {
            Some(k) => {
                let (p, v) = evaluate(&self.edges[k].traj, t);
                (p, v, Some(k), self.edges[k].planner)
            }
            None => (self.hold, [0.0; 3], None, self.hold_planner),
        }
    }

    /// Keeps the reference up to `t` and holds its position there.
    fn truncate(&mut self, t: f64, planner: usize) {
        let (p, ..) = self.eval(t);
        self.edges.retain(|e| e.traj.start_time() < t);
        if let Some(last) = self.edges.last_mut() {
            last.traj = last.traj.window(last.traj.start_time(), t);
        }
        self.edges.retain(|e| e.traj.duration() > 0.0);
        self.hold = p;
        self.hold_planner = planner;
        self.at_goal = false;
    }

    /// Follows `plan` from time `t` on.
    fn splice(&mut self, t: f64, planner: usize, plan: &MetaPlan, goal: Vec3) {
        self.truncate(t, planner);
        let held_from = self.edges.last().map_or(0.0, |e| e.traj.end_time());
        if held_from < t {
            self.edges.push(PlanEdge {
                planner,
                traj: TimedTrajectory {
                    planner,
                    waypoints: vec![(held_from, self.hold), (t, self.hold)],
                },
                switch: None,
            });
        }
        for e in &plan.edges {
            let mut e = e.clone();
            e.traj = e.traj.starting_at(e.traj.start_time() + t);
            self.edges.push(e);
        }
        if let Some(last) = plan.edges.last() {
            self.hold = last.traj.end();
            self.hold_planner = last.planner;
        }
        self.at_goal = self.hold == goal;
    }

    /// Retraces the path covered over `[t0, t]` backwards from `t`, then holds.
    fn reverse(&mut self, t0: f64, t: f64, planner: usize) {
        let mut back: Vec<PlanEdge> = self
            .edges
            .iter()
            .filter(|e| e.traj.end_time() > t0 && e.traj.start_time() < t)
            .map(|e| PlanEdge {
                planner,
                traj: TimedTrajectory {
                    planner,
                    ..e.traj.window(t0, t)
                },
                switch: None,
            })
            .filter(|e| e.traj.duration() > 0.0)
            .collect();
        self.truncate(t, planner);
        back.reverse();
        let mut start = t;
        for e in back {
            let r = e.traj.reversed().starting_at(start);
            start = r.end_time();
            self.hold = r.end();
            self.edges.push(PlanEdge { traj: r, ..e });
        }
        self.at_goal = false;
    }

    /// Remaining part after `t` is clear under its planners' TEBs.
    fn still_clear(&self, t: f64, suite: &PlannerSuite, env: &Environment) -> bool {
        self.edges
            .iter()
            .filter(|e| e.traj.end_time() > t)
            .all(|e| e.traj.window(t, e.traj.end_time()).clear(suite.teb(e.planner), env))
            && env.point_clear(&self.hold, suite.teb(self.hold_planner))
    }
}

/// Switch in progress: axis `a` hands over once inside planner `to`'s set.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ActiveSwitch {
    from: usize,
    to: usize,
    done: [bool; 3],
}

enum Pending {
    Splice(MetaPlan),
    Stop,
    Keep,
}

struct Replan {
    at: f64,
    planner: usize,
    action: Pending,
}

/// Closed-loop run. The scenario's sensing radius must cover the fastest
/// planner's bound plus the distance it travels during one replan.
pub fn run(scenario: &Scenario, suite: &TrackingSuite, config: &SimConfig) -> Result<(SimTrace, SimSummary), SimError> {
    config.validate()?;
    let plans_suite = suite.planner_suite().map_err(|e| SimError::Suite(e.to_string()))?;
    let n_planners = plans_suite.len();
    let mut env = Environment::new(scenario.workspace, scenario.obstacles.clone(), scenario.sensing_radius)?;
    env.validate_sensing(&sensing_minimum(
        plans_suite.teb(0),
        plans_suite.fastest_speed(),
        config.replan_budget,
    ))?;
    let controllers: Vec<SafetyController> = (0..n_planners)
        .map(|k| suite.controller(k, config.dt))
        .collect::<Result<_, _>>()
        .map_err(|e| SimError::Suite(e.to_string()))?;
    let limits = suite.config.limits;
    let dist = suite.config.disturbance;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let goal = scenario.goal;

    let mut trace = SimTrace {
        obstacles: scenario.obstacles.clone(),
        ..Default::default()
    };
    let mut summary = SimSummary::default();
    let mut replan_count: u64 = 0;
    let plan_at = |env: &Environment, root: Vec3, planner: usize, count: &mut u64| -> Option<MetaPlan> {
        let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(*count);
        *count += 1;
        let mut tree = init_root(root, planner, goal, &plans_suite, env, seed).ok()?;
        let plan = grow(&mut tree, env, &plans_suite, &config.grow)?;
        debug_assert!(validate_plan(&plan, &plans_suite, env).is_ok());
        Some(plan)
    };

    env.sense(&scenario.start);
    let slowest = n_planners - 1;
    let mut reference = Reference::holding(scenario.start, slowest);
    let mut needs_replan = false;
    match plan_at(&env, scenario.start, slowest, &mut replan_count) {
        Some(plan) => {
            reference.splice(0.0, slowest, &plan, goal);
            trace.plans.push(plan);
        }
        None => {
            summary.fallbacks += 1;
            needs_replan = true;
        }
    }

    let mut tracker = TrackingState6::at_rest(scenario.start);
    let mut current_edge: Option<usize> = None;
    let mut switch: Option<ActiveSwitch> = None;
    let mut pending: Option<Replan> = None;
    let steps = (config.horizon / config.dt).round() as usize;
    let mut used = vec![false; n_planners];

    for n in 0..=steps {
        let t = n as f64 * config.dt;
        if pending.as_ref().is_some_and(|r| r.at <= t + 1e-9) {
            let r = pending.take().expect("checked above");
            match r.action {
                Pending::Splice(plan) => {
                    reference.splice(r.at, r.planner, &plan, goal);
                    let shifted = MetaPlan {
                        edges: reference
                            .edges
                            .iter()
                            .filter(|e| e.traj.start_time() >= r.at - 1e-12)
                            .cloned()
                            .collect(),
                        ..plan
                    };
                    trace.plans.push(shifted);
                    current_edge = None;
                }
                Pending::Stop => {
                    reference.truncate(r.at, r.planner);
                    needs_replan = true;
                }
                Pending::Keep => {}
            }
        }

        let (p, pv, edge, planner) = reference.eval(t);
        used[planner] = true;
        if edge != current_edge {
            if let Some(k) = edge {
                let e = &reference.edges[k];
                if let Some(rec) = e.switch {
                    let from = switch.map_or(rec.from, |s| s.from.min(rec.from));
                    switch = (from < e.planner).then_some(ActiveSwitch {
                        from,
                        to: e.planner,
                        done: [false; 3],
                    });
                } else if let Some(s) = switch {
                    if e.planner != s.to {
                        switch = (e.planner > s.from).then_some(ActiveSwitch { to: e.planner, ..s });
                    }
                }
            }
            current_edge = edge;
        }

        let pos = tracker.position;
        let rel = lift_and_subtract(&tracker, &p);
        if let Some(s) = switch.as_mut() {
            for a in 0..3 {
                if !s.done[a] && suite.planners[s.to].axis(a).contains(rel[a]) {
                    s.done[a] = true;
                }
            }
            if s.done.iter().all(|d| *d) {
                switch = None;
            }
        }
        let bound = match switch {
            Some(s) => suite.switch(s.from, s.to).bound,
            None => suite.planners[planner].teb,
        };
        let extents = bound.as_array();
        let ratio = (0..3).map(|a| rel[a].r.abs() / extents[a]).fold(0.0, f64::max);
        summary.max_bound_ratio = summary.max_bound_ratio.max(ratio);
        let teb_violation = ratio > 1.0;
        let collision = env.collides(&pos);

        if !env.sense(&pos).is_empty() {
            needs_replan = true;
        }
        if needs_replan && pending.is_none() {
            needs_replan = false;
            summary.replans += 1;
            let at = t + config.replan_budget;
            let (root, _, _, root_planner) = reference.eval(at);
            // a switch that may still run at the root leaves the tracker in the faster TEB
            let mut eff = root_planner;
            if let Some(s) = switch {
                eff = eff.min(s.from);
            }
            for e in reference.edges.iter().filter(|e| e.traj.start_time() <= at) {
                if let Some(rec) = e.switch {
                    if at < e.traj.start_time() + rec.span {
                        eff = eff.min(rec.from);
                    }
                }
            }
            let action = match plan_at(&env, root, eff, &mut replan_count) {
                Some(plan) => Pending::Splice(plan),
                None if reference.still_clear(t, &plans_suite, &env) => Pending::Keep,
                None => {
                    summary.fallbacks += 1;
                    Pending::Stop
                }
            };
            let blocked_ahead = matches!(action, Pending::Stop) && !env.point_clear(&root, plans_suite.teb(eff));
            if blocked_ahead {
                // stopping at the root is not safe either: turn back now
                reference.reverse((t - config.replan_budget).max(0.0), t, eff);
                current_edge = None;
                needs_replan = true;
            } else {
                pending = Some(Replan {
                    at,
                    planner: eff,
                    action,
                });
            }
        }

        let rel_arr = rel;
        let mut modes = [AxisMode::Nominal; 3];
        let accel: Vec3 = match config.controller {
            ControllerMode::Lqr => lqr_control(&suite.config.nominal(), &rel_arr, &limits).accel,
            ControllerMode::Optimal => match switch {
                None => {
                    let out = controllers[planner].optimal_control(&rel_arr);
                    modes = out.modes;
                    out.accel
                }
                Some(s) => {
                    let nominal = suite.config.nominal().accel(&rel_arr);
                    std::array::from_fn(|a| {
                        let (u, m) = if s.done[a] {
                            controllers[s.to].axis_accel(a, rel_arr[a], nominal[a])
                        } else {
                            let large = suite.planners[s.from].axis(a);
                            let tube = suite.switch(s.from, s.to).axis(a);
                            let drive = switching_control(tube, rel_arr[a]).unwrap_or(nominal[a]);
                            supervise(large, controllers[s.from].threshold(a), config.dt, rel_arr[a], drive)
                        };
                        modes[a] = m;
                        u
                    })
                }
            },
        };
        let mapped = accel_to_control(accel, &limits);

        let disturbance = match config.disturbance {
            DisturbanceMode::None => Disturbance6::default(),
            DisturbanceMode::Random => Disturbance6 {
                dv: std::array::from_fn(|_| rng.gen_range(-dist.dv_max..=dist.dv_max)),
                da: std::array::from_fn(|_| rng.gen_range(-dist.da_max..=dist.da_max)),
            },
            DisturbanceMode::Adversarial => {
                let mut d = Disturbance6::default();
                for a in 0..3 {
                    let vf = match switch {
                        Some(s) if !s.done[a] => suite.planners[s.from].axis(a),
                        Some(s) => suite.planners[s.to].axis(a),
                        None => suite.planners[planner].axis(a),
                    };
                    (d.dv[a], d.da[a]) = adversarial_disturbance(rel[a], vf);
                }
                d
            }
        };
        let value: Vec3 = std::array::from_fn(|a| {
            let vf = match switch {
                Some(s) if !s.done[a] => suite.planners[s.from].axis(a),
                Some(s) => suite.planners[s.to].axis(a),
                None => suite.planners[planner].axis(a),
            };
            vf.value(rel[a]).unwrap_or(f64::INFINITY)
        });

        summary.violation_steps += teb_violation as usize;
        summary.collision_steps += collision as usize;
        trace.records.push(SimRecord {
            t,
            tracker,
            reference: p,
            reference_vel: pv,
            rel,
            planner,
            bound,
            control: mapped.control,
            disturbance,
            value,
            teb_violation,
            collision,
            replanning: pending.is_some(),
            switching: switch.is_some(),
            emergency: modes.contains(&AxisMode::Emergency),
        });

        let arrived = reference.at_goal
            && t >= reference.end_time()
            && ((0..3).all(|a| (pos[a] - goal[a]).abs() <= config.goal_tolerance)
                || (!teb_violation && t >= reference.end_time() + config.settle_time));
        if arrived {
            summary.reached_goal = true;
            break;
        }
        tracker = step_tracker(&tracker, &mapped.control, &disturbance, &limits, config.dt)?;
    }

    summary.steps = trace.records.len();
    summary.final_time = trace.records.last().map_or(0.0, |r| r.t);
    summary.planners_used = (0..n_planners).filter(|k| used[*k]).collect();
    Ok((trace, summary))
}

/// One CSV row of a trace; column order is the field order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub ref_z: f64,
    pub ref_vx: f64,
    pub ref_vy: f64,
    pub ref_vz: f64,
    pub r_x: f64,
    pub v_x: f64,
    pub r_y: f64,
    pub v_y: f64,
    pub r_z: f64,
    pub v_z: f64,
    pub planner: usize,
    pub bound_x: f64,
    pub bound_y: f64,
    pub bound_z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub thrust: f64,
    pub dv_x: f64,
    pub dv_y: f64,
    pub dv_z: f64,
    pub da_x: f64,
    pub da_y: f64,
    pub da_z: f64,
    pub value_x: f64,
    pub value_y: f64,
    pub value_z: f64,
    pub teb_violation: bool,
    pub collision: bool,
    pub replanning: bool,
    pub switching: bool,
    pub emergency: bool,
}

impl From<&SimRecord> for TraceRow {
    fn from(r: &SimRecord) -> Self {
        Self {
            t: r.t,
            x: r.tracker.position[0],
            y: r.tracker.position[1],
            z: r.tracker.position[2],
            vx: r.tracker.velocity[0],
            vy: r.tracker.velocity[1],
            vz: r.tracker.velocity[2],
            ref_x: r.reference[0],
            ref_y: r.reference[1],
            ref_z: r.reference[2],
            ref_vx: r.reference_vel[0],
            ref_vy: r.reference_vel[1],
            ref_vz: r.reference_vel[2],
            r_x: r.rel[0].r,
            v_x: r.rel[0].v,
            r_y: r.rel[1].r,
            v_y: r.rel[1].v,
            r_z: r.rel[2].r,
            v_z: r.rel[2].v,
            planner: r.planner,
            bound_x: r.bound.ex,
            bound_y: r.bound.ey,
            bound_z: r.bound.ez,
            roll: r.control.roll,
            pitch: r.control.pitch,
            thrust: r.control.thrust,
            dv_x: r.disturbance.dv[0],
            dv_y: r.disturbance.dv[1],
            dv_z: r.disturbance.dv[2],
            da_x: r.disturbance.da[0],
            da_y: r.disturbance.da[1],
            da_z: r.disturbance.da[2],
            value_x: r.value[0],
            value_y: r.value[1],
            value_z: r.value[2],
            teb_violation: r.teb_violation,
            collision: r.collision,
            replanning: r.replanning,
            switching: r.switching,
            emergency: r.emergency,
        }
    }
}

/// Geometry row: obstacles and executed plan waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    /// `obstacle` or `plan`.
    pub kind: &'static str,
    /// Obstacle index, or plan index for waypoints.
    pub id: usize,
    pub edge: usize,
    pub planner: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub radius: f64,
}

/// Writes `<stem>.csv` (one row per step) and `<stem>_geometry.csv`.
pub fn export_trace(trace: &SimTrace, dir: &Path, stem: &str) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    if trace.records.is_empty() {
        w.write_record(trace_header())?;
    }
    for r in &trace.records {
        w.serialize(TraceRow::from(r))?;
    }
    w.flush()?;
    let mut g = csv::Writer::from_path(dir.join(format!("{stem}_geometry.csv")))?;
    let mut any = false;
    for (id, o) in trace.obstacles.iter().enumerate() {
        any = true;
        g.serialize(GeometryRow {
            kind: "obstacle",
            id,
            edge: 0,
            planner: 0,
            t: 0.0,
            x: o.center[0],
            y: o.center[1],
            z: o.center[2],
            radius: o.radius,
        })?;
    }
    for (id, plan) in trace.plans.iter().enumerate() {
        for (edge, e) in plan.edges.iter().enumerate() {
            for (t, p) in &e.traj.waypoints {
                any = true;
                g.serialize(GeometryRow {
                    kind: "plan",
                    id,
                    edge,
                    planner: e.planner,
                    t: *t,
                    x: p[0],
                    y: p[1],
                    z: p[2],
                    radius: 0.0,
                })?;
            }
        }
    }
    if !any {
        g.write_record(["kind", "id", "edge", "planner", "t", "x", "y", "z", "radius"])?;
    }
    g.flush()?;
    Ok(())
}

/// Column names of the trace CSV.
pub fn trace_header() -> Vec<&'static str> {
    vec![
        "t",
        "x",
        "y",
        "z",
        "vx",
        "vy",
        "vz",
        "ref_x",
        "ref_y",
        "ref_z",
        "ref_vx",
        "ref_vy",
        "ref_vz",
        "r_x",
        "v_x",
        "r_y",
        "v_y",
        "r_z",
        "v_z",
        "planner",
        "bound_x",
        "bound_y",
        "bound_z",
        "roll",
        "pitch",
        "thrust",
        "dv_x",
        "dv_y",
        "dv_z",
        "da_x",
        "da_y",
        "da_z",
        "value_x",
        "value_y",
        "value_z",
        "teb_violation",
        "collision",
        "replanning",
        "switching",
        "emergency",
    ]
}

/// Reads a trace CSV written by [`export_trace`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, SimError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Writes `summary` as pretty JSON.
pub fn write_summary(summary: &SimSummary, path: &Path) -> Result<(), SimError> {
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "{}",
        serde_json::to_string_pretty(summary).map_err(|e| SimError::Config(e.to_string()))?
    )?;
    Ok(())
}
