//! Straight-line kinematic edges with per-axis maximum-speed profiles.
//!
//! Every axis moves at its own maximum speed until it arrives, so the
//! traversal takes the weighted-L∞ time `max_a |Δa| / b_a` and the traced
//! path is a polyline that bends each time an axis arrives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{PlannerSpeed, Vec3};
use crate::environment::Environment;
use crate::reachability::SafetyBound;

#[derive(Debug, Error, PartialEq)]
pub enum EdgeError {
    #[error("edge from {from:?} to {to:?} is blocked for planner {planner}")]
    Blocked { from: Vec3, to: Vec3, planner: usize },
}

/// A kinematic planner: per-axis speed limits and its tracking error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerSpec {
    pub speed: PlannerSpeed,
    pub teb: SafetyBound,
}

/// Piecewise-linear timed path of one planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedTrajectory {
    pub planner: usize,
    /// `(time, position)` with strictly increasing times; a single entry
    /// is a zero-duration trajectory.
    pub waypoints: Vec<(f64, Vec3)>,
}

impl TimedTrajectory {
    pub fn stationary(planner: usize, t: f64, p: Vec3) -> Self {
        Self {
            planner,
            waypoints: vec![(t, p)],
        }
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].0
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn start(&self) -> Vec3 {
        self.waypoints[0].1
    }

    pub fn end(&self) -> Vec3 {
        self.waypoints[self.waypoints.len() - 1].1
    }

    /// Same path with every time shifted so it starts at `t0`.
    pub fn starting_at(&self, t0: f64) -> Self {
        let dt = t0 - self.start_time();
        Self {
            planner: self.planner,
            waypoints: self.waypoints.iter().map(|(t, p)| (t + dt, *p)).collect(),
        }
    }

    /// Same path traversed backwards with the same leg durations.
    pub fn reversed(&self) -> Self {
        let t0 = self.start_time();
        let t1 = self.end_time();
        Self {
            planner: self.planner,
            waypoints: self.waypoints.iter().rev().map(|(t, p)| (t0 + (t1 - t), *p)).collect(),
        }
    }

    /// The portion between times `a` and `b` (clamped to the trajectory).
    pub fn window(&self, a: f64, b: f64) -> Self {
        let a = a.clamp(self.start_time(), self.end_time());
        let b = b.clamp(a, self.end_time());
        let mut wps = vec![(a, evaluate(self, a).0)];
        for &(t, p) in &self.waypoints {
            if t > a && t < b {
                wps.push((t, p));
            }
        }
        if b > a {
            wps.push((b, evaluate(self, b).0));
        }
        Self {
            planner: self.planner,
            waypoints: wps,
        }
    }

    /// Largest per-axis speed over all legs.
    pub fn max_speeds(&self) -> Vec3 {
        let mut m = [0.0; 3];
        for w in self.waypoints.windows(2) {
            let dt = w[1].0 - w[0].0;
            for a in 0..3 {
                m[a] = f64::max(m[a], (w[1].1[a] - w[0].1[a]).abs() / dt);
            }
        }
        m
    }

    /// Every leg clears the environment under `bound`.
    pub fn clear(&self, bound: &SafetyBound, env: &Environment) -> bool {
        if self.waypoints.len() == 1 {
            return env.point_clear(&self.start(), bound);
        }
        self.waypoints
            .windows(2)
            .all(|w| env.segment_clear(&w[0].1, &w[1].1, bound))
    }
}

/// Weighted-L∞ travel time between two points at the given speeds.
pub fn travel_time_lower_bound(a: &Vec3, b: &Vec3, speed: &PlannerSpeed) -> f64 {
    let s = speed.as_array();
    (0..3).map(|k| (b[k] - a[k]).abs() / s[k]).fold(0.0, f64::max)
}

/// Waypoints of the per-axis maximum-speed profile from `start` to `target`,
/// beginning at time 0.
pub fn speed_profile(start: &Vec3, target: &Vec3, speed: &PlannerSpeed) -> Vec<(f64, Vec3)> {
    let s = speed.as_array();
    let arrive: Vec3 = std::array::from_fn(|a| (target[a] - start[a]).abs() / s[a]);
    let mut times: Vec<f64> = arrive.iter().copied().filter(|t| *t > 0.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let at = |t: f64| -> Vec3 {
        std::array::from_fn(|a| {
            if t >= arrive[a] {
                target[a]
            } else {
                start[a] + (target[a] - start[a]).signum() * s[a] * t
            }
        })
    };
    let mut wps = vec![(0.0, *start)];
    wps.extend(times.into_iter().map(|t| (t, at(t))));
    if let Some(last) = wps.last_mut() {
        // exact endpoint despite rounding in the leg arithmetic
        last.1 = *target;
    }
    wps
}

/// Straight edge under `spec`, or an error if its bound box hits a known
/// obstacle or leaves the workspace anywhere along the path.
pub fn plan_edge(
    start: &Vec3,
    target: &Vec3,
    planner: usize,
    spec: &PlannerSpec,
    env: &Environment,
) -> Result<TimedTrajectory, EdgeError> {
    let traj = TimedTrajectory {
        planner,
        waypoints: speed_profile(start, target, &spec.speed),
    };
    if traj.clear(&spec.teb, env) {
        Ok(traj)
    } else {
        Err(EdgeError::Blocked {
            from: *start,
            to: *target,
            planner,
        })
    }
}

/// Same polyline re-timed for a slower planner: each leg takes the
/// weighted-L∞ time of its displacement at the new speeds.
pub fn retime(traj: &TimedTrajectory, planner: usize, speed: &PlannerSpeed) -> TimedTrajectory {
    let mut t = traj.start_time();
    let mut wps = vec![(t, traj.start())];
    for w in traj.waypoints.windows(2) {
        let dt = travel_time_lower_bound(&w[0].1, &w[1].1, speed);
        if dt > 0.0 {
            t += dt;
            wps.push((t, w[1].1));
        }
    }
    TimedTrajectory {
        planner,
        waypoints: wps,
    }
}

/// Reference position and velocity at time `t`; holds the end point with
/// zero velocity past the end and the start point before it.
pub fn evaluate(traj: &TimedTrajectory, t: f64) -> (Vec3, Vec3) {
    let wps = &traj.waypoints;
    if t < wps[0].0 {
        return (wps[0].1, [0.0; 3]);
    }
    // first waypoint strictly after t
    let k = wps.partition_point(|(tk, _)| *tk <= t);
    if k >= wps.len() {
        return (wps[wps.len() - 1].1, [0.0; 3]);
    }
    let (t0, p0) = wps[k - 1];
    let (t1, p1) = wps[k];
    let h = t1 - t0;
    let vel: Vec3 = std::array::from_fn(|a| (p1[a] - p0[a]) / h);
    let s = t - t0;
    (std::array::from_fn(|a| p0[a] + vel[a] * s), vel)
}
