#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use metaplan::control::supervise;
use metaplan::dynamics::{
    step_relative, ControlLimits, DisturbanceBounds, PlannerSpeed, RelativeState2, Subsystem2Params, Vec3,
};
use metaplan::environment::{Environment, Obstacle, Workspace};
use metaplan::geo_planner::PlannerSpec;
use metaplan::metaplanner::{
    extend, grow, init_root, BacktrackMode, Budget, GrowConfig, MetaPlan, MetaTree, PlanEdge, PlannerSuite, SwitchBound,
};
use metaplan::reachability::{
    load_value_function, save_value_function, solve_invariant_set, zero_level_crossings, AnalyticInvariantSet, Grid2,
    SafetyBound, SolverSettings, ValueFunction2D,
};
use metaplan::simulator::Scenario;
use metaplan::suite::{SuiteConfig, TrackingSuite};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("metaplan-cache")
}

pub fn xy(b: f64) -> Subsystem2Params {
    Subsystem2Params::tilt_axis(0.15, b, DisturbanceBounds::default()).unwrap()
}

pub fn z(b: f64) -> Subsystem2Params {
    Subsystem2Params::thrust_axis(&ControlLimits::default(), b, DisturbanceBounds::default()).unwrap()
}

/// Invariant-set solve, cached on disk across test binaries.
pub fn solved(p: &Subsystem2Params, grid: &Grid2) -> ValueFunction2D {
    let settings = SolverSettings::default();
    let key = serde_json::to_string(&(p, grid, &settings)).unwrap();
    let name = hex::encode(&Sha256::digest(key.as_bytes())[..12]);
    let dir = cache_dir().join("vf");
    let path = dir.join(format!("{name}.vf"));
    if let Ok(vf) = load_value_function(&path, Some(p)) {
        return vf;
    }
    let vf = solve_invariant_set(p, grid, &settings).unwrap();
    std::fs::create_dir_all(&dir).unwrap();
    let tmp = dir.join(format!("{name}.{}.tmp", std::process::id()));
    save_value_function(&vf, &tmp).unwrap();
    std::fs::rename(&tmp, &path).unwrap();
    vf
}

/// The shipped three-planner suite, solved once and cached.
pub fn shipped() -> &'static TrackingSuite {
    static SUITE: OnceLock<TrackingSuite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let dir = cache_dir().join("suite");
        TrackingSuite::load_or_solve(&dir, &SuiteConfig::default()).unwrap().0
    })
}

/// Hausdorff distance in grid cells (each axis scaled by its spacing)
/// between the numerical zero-level contour and the analytic boundary.
pub fn hausdorff_cells(vf: &ValueFunction2D, an: &AnalyticInvariantSet) -> f64 {
    let (sr, sv) = (vf.grid.dr(), vf.grid.dv());
    let num = zero_level_crossings(vf);
    let ana = an.boundary(4000);
    assert!(!num.is_empty());
    let directed = |a: &[(f64, f64)], b: &[(f64, f64)]| {
        a.iter()
            .map(|p| {
                b.iter()
                    .map(|q| (((p.0 - q.0) / sr).powi(2) + ((p.1 - q.1) / sv).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(&num, &ana).max(directed(&ana, &num))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutStats {
    pub rollouts: usize,
    pub exits: usize,
    /// Largest `V - margin` seen; positive means the certified set was left.
    pub worst_excess: f64,
}

/// Starts on certified-set nodes and flies `steps` steps of the supervised
/// controller (LQR nominal) against a mix of random, bang and
/// gradient-adversarial planner/disturbance strategies.
pub fn escape_test(vf: &ValueFunction2D, lambda: f64, rollouts: usize, steps: usize, seed: u64) -> RolloutStats {
    let p = vf.params;
    let dt = 0.01;
    let threshold = lambda * vf.min_value();
    let starts: Vec<(usize, usize)> = vf.set_nodes().collect();
    assert!(!starts.is_empty());
    let g = vf.grid;
    let worst: Vec<f64> = (0..rollouts as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(k));
            let (i, j) = starts[rng.gen_range(0..starts.len())];
            let mut x = RelativeState2::new(g.r_at(i), g.v_at(j));
            let (mut b, mut dv, mut da) = (0.0, 0.0, 0.0);
            let mut worst = f64::NEG_INFINITY;
            for step in 0..steps {
                match k % 3 {
                    0 => {
                        if step % 20 == 0 {
                            b = rng.gen_range(-p.b_max..=p.b_max);
                            dv = rng.gen_range(-p.dv_max..=p.dv_max);
                            da = rng.gen_range(-p.da_max..=p.da_max);
                        }
                    }
                    1 => {
                        if step == 0 || rng.gen_bool(0.05) {
                            let s = |r: &mut ChaCha8Rng| if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                            b = s(&mut rng) * p.b_max;
                            dv = s(&mut rng) * p.dv_max;
                            da = s(&mut rng) * p.da_max;
                        }
                    }
                    _ => {
                        let s = vf.value_and_gradient(x).map(|s| (s.dr, s.dv)).unwrap_or((0.0, 0.0));
                        b = if s.0 >= 0.0 { -p.b_max } else { p.b_max };
                        dv = if s.0 >= 0.0 { -p.dv_max } else { p.dv_max };
                        da = if s.1 >= 0.0 { -p.da_max } else { p.da_max };
                    }
                }
                let nominal = -4.0 * x.r - 3.0 * x.v;
                let (u, _) = supervise(vf, threshold, dt, x, p.clamp_accel(nominal));
                x = step_relative(&p, x, u, b, dv, da, dt).unwrap();
                let v = vf.value(x).unwrap_or(f64::INFINITY);
                worst = worst.max(v - vf.margin);
            }
            worst
        })
        .collect();
    RolloutStats {
        rollouts,
        exits: worst.iter().filter(|w| **w > 0.0).count(),
        worst_excess: worst.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn spec(speed: f64, teb: f64) -> PlannerSpec {
    PlannerSpec {
        speed: PlannerSpeed::new(speed, speed, speed).unwrap(),
        teb: SafetyBound::uniform(teb),
    }
}

pub fn known(obstacles: Vec<Obstacle>) -> Environment {
    Environment::new(
        Workspace::new([0.0, 0.0, 0.0], [20.0, 10.0, 3.0]).unwrap(),
        obstacles,
        5.0,
    )
    .unwrap()
    .fully_known()
}

/// Three planners whose switches out of the fastest one need a switching
/// bound twice its TEB, and a world where that bound grazes an obstacle
/// along the second edge of a fast path.
pub fn enlarged_fixture(mode: BacktrackMode) -> (MetaTree, PlannerSuite, Environment, usize, Vec3) {
    let mut suite = PlannerSuite::kinematic(vec![spec(1.0, 0.3), spec(0.5, 0.2), spec(0.25, 0.1)], 1.0, 1.5).unwrap();
    for k in [1, 2] {
        suite.set_ssb(
            0,
            k,
            SwitchBound {
                bound: SafetyBound::uniform(0.6),
                horizon: 4.0,
            },
        );
    }
    let env = known(vec![
        // between TEB_0 (0.3) and SSB_0 (0.6) of the edge (5,5,1) -> (8,5,1)
        Obstacle::new([6.5, 5.65, 1.0], 0.2),
        // blocks TEB_0 but not TEB_1 along (8,5,1) -> (11,5,1)
        Obstacle::new([9.5, 4.55, 1.0], 0.2),
    ]);
    let target = [11.0, 5.0, 1.0];
    let mut tree = init_root([1.0, 5.0, 1.0], 2, target, &suite, &env, 0).unwrap();
    let v = extend(&mut tree, 0, &[5.0, 5.0, 1.0], &suite, &env, mode).unwrap();
    let w = extend(&mut tree, v, &[8.0, 5.0, 1.0], &suite, &env, mode).unwrap();
    assert_eq!(tree.incoming_planner(v), 0);
    assert_eq!(tree.incoming_planner(w), 0);
    (tree, suite, env, w, target)
}

/// Fastest time from `a` through `s` to `b`, found by stepping each axis at
/// its top speed on a fine clock.
pub fn stepped_time(a: &Vec3, s: &Vec3, b: &Vec3, speed: &PlannerSpeed) -> f64 {
    let dt = 1e-4;
    let leg = |from: &Vec3, to: &Vec3| {
        let sp = speed.as_array();
        let mut p = *from;
        let mut t = 0.0;
        while (0..3).any(|k| (p[k] - to[k]).abs() > 1e-12) {
            for k in 0..3 {
                let step = sp[k] * dt;
                let d = to[k] - p[k];
                p[k] = if d.abs() <= step {
                    to[k]
                } else {
                    p[k] + step * d.signum()
                };
            }
            t += dt;
        }
        t
    };
    leg(a, s) + leg(s, b)
}

pub fn corridor_plan(seed: u64) -> (MetaPlan, PlannerSuite, Environment) {
    let suite = shipped().planner_suite().unwrap();
    let sc = Scenario::corridor(0.5);
    let env = Environment::new(sc.workspace, sc.obstacles, sc.sensing_radius)
        .unwrap()
        .fully_known();
    let mut tree = init_root(sc.start, suite.slowest(), sc.goal, &suite, &env, seed).unwrap();
    let cfg = GrowConfig {
        budget: Budget::Iterations(5000),
        ..GrowConfig::default()
    };
    let plan = grow(&mut tree, &env, &suite, &cfg).expect("corridor is passable");
    assert!(tree.iterations <= 5000);
    (plan, suite, env)
}

/// Planner indices of edges through the corridor (x in [8, 12] or
/// crossing x = 10) and of edges entirely in open space.
pub fn corridor_split(plan: &MetaPlan) -> (Vec<usize>, Vec<usize>) {
    let xs = |e: &PlanEdge| e.traj.waypoints.iter().map(|w| w.1[0]).collect::<Vec<_>>();
    let corridor = plan
        .edges
        .iter()
        .filter(|e| {
            let x = xs(e);
            x.iter().any(|x| (8.0..=12.0).contains(x)) || (x[0] < 10.0) != (*x.last().unwrap() < 10.0)
        })
        .map(|e| e.planner)
        .collect();
    let open = plan
        .edges
        .iter()
        .filter(|e| xs(e).iter().all(|x| *x < 7.0 || *x > 13.0))
        .map(|e| e.planner)
        .collect();
    (corridor, open)
}
