//! Spherical obstacles, incremental sensing and box-vs-sphere clearance.
//!
//! An obstacle is revealed once its surface comes within the sensing radius
//! of the tracker (closed condition). Clearance checks treat the planner
//! reference as an axis-aligned box of the safety bound's half-extents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{PlannerSpeed, Vec3};
use crate::reachability::SafetyBound;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("obstacle {index} is invalid (radius {radius})")]
    InvalidObstacle { index: usize, radius: f64 },
    #[error("workspace box is empty or non-finite")]
    EmptyWorkspace,
    #[error("sensing radius {actual:.3} m is below the required {required:.3} m")]
    SensingTooShort { required: f64, actual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec3,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Distance from `p` to the sphere surface (negative inside).
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        norm(&sub(p, &self.center)) - self.radius
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.surface_distance(p) < 0.0
    }
}

/// Axis-aligned workspace box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Workspace {
    pub fn new(lo: Vec3, hi: Vec3) -> Result<Self, EnvError> {
        let ok = (0..3).all(|a| lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]);
        if ok {
            Ok(Self { lo, hi })
        } else {
            Err(EnvError::EmptyWorkspace)
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    /// True when the box of half-extents `e` around `p` lies inside.
    pub fn contains_box(&self, p: &Vec3, e: &Vec3) -> bool {
        (0..3).all(|a| p[a] - e[a] >= self.lo[a] && p[a] + e[a] <= self.hi[a])
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec3 {
        std::array::from_fn(|a| rng.gen_range(self.lo[a]..=self.hi[a]))
    }
}

/// World with obstacles that become known as they are sensed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub workspace: Workspace,
    pub obstacles: Vec<Obstacle>,
    known: Vec<bool>,
    pub sensing_radius: f64,
}

impl Environment {
    /// All obstacles start unknown.
    pub fn new(workspace: Workspace, obstacles: Vec<Obstacle>, sensing_radius: f64) -> Result<Self, EnvError> {
        Workspace::new(workspace.lo, workspace.hi)?;
        for (index, o) in obstacles.iter().enumerate() {
            if !(o.radius > 0.0 && o.radius.is_finite() && o.center.iter().all(|c| c.is_finite())) {
                return Err(EnvError::InvalidObstacle {
                    index,
                    radius: o.radius,
                });
            }
        }
        Ok(Self {
            workspace,
            known: vec![false; obstacles.len()],
            obstacles,
            sensing_radius,
        })
    }

    /// Same world with every obstacle known.
    pub fn fully_known(mut self) -> Self {
        self.known.iter_mut().for_each(|k| *k = true);
        self
    }

    pub fn is_known(&self, index: usize) -> bool {
        self.known[index]
    }

    pub fn known_obstacles(&self) -> impl Iterator<Item = &Obstacle> {
        self.obstacles
            .iter()
            .zip(&self.known)
            .filter(|(_, k)| **k)
            .map(|(o, _)| o)
    }

    /// Rejects a sensing radius below the worst-axis requirement.
    pub fn validate_sensing(&self, required: &Vec3) -> Result<(), EnvError> {
        let need = required.iter().copied().fold(0.0, f64::max);
        if self.sensing_radius < need {
            Err(EnvError::SensingTooShort {
                required: need,
                actual: self.sensing_radius,
            })
        } else {
            Ok(())
        }
    }

    /// Reveals unknown obstacles whose surface is within the sensing radius;
    /// returns their indices.
    pub fn sense(&mut self, tracker: &Vec3) -> Vec<usize> {
        let mut revealed = Vec::new();
        for (i, o) in self.obstacles.iter().enumerate() {
            if !self.known[i] && o.surface_distance(tracker) <= self.sensing_radius {
                self.known[i] = true;
                revealed.push(i);
            }
        }
        revealed
    }

    /// The bound box around `p` is inside the workspace and disjoint from
    /// every known obstacle.
    pub fn point_clear(&self, p: &Vec3, bound: &SafetyBound) -> bool {
        let e = bound.as_array();
        self.workspace.contains_box(p, &e)
            && self
                .known_obstacles()
                .all(|o| box_distance_sq(&o.center, p, &e) > o.radius * o.radius)
    }

    /// The bound box swept along `p0 → p1` is inside the workspace and
    /// disjoint from every known obstacle.
    pub fn segment_clear(&self, p0: &Vec3, p1: &Vec3, bound: &SafetyBound) -> bool {
        let e = bound.as_array();
        if !(self.workspace.contains_box(p0, &e) && self.workspace.contains_box(p1, &e)) {
            return false;
        }
        self.known_obstacles()
            .all(|o| segment_box_distance_sq(&o.center, p0, p1, &e) > o.radius * o.radius)
    }

    /// Whether `p` lies inside any obstacle, known or not.
    pub fn collides(&self, p: &Vec3) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }
}

/// Per-axis minimum sensing distance: bound extent plus the distance the
/// fastest reference covers during one replanning budget.
pub fn sensing_minimum(bound_max: &SafetyBound, speed: &PlannerSpeed, replan_budget: f64) -> Vec3 {
    let e = bound_max.as_array();
    let b = speed.as_array();
    std::array::from_fn(|a| e[a] + b[a] * replan_budget)
}

/// Squared distance from `c` to the box centred at `q` with half-extents `e`.
pub fn box_distance_sq(c: &Vec3, q: &Vec3, e: &Vec3) -> f64 {
    (0..3)
        .map(|a| {
            let d = ((c[a] - q[a]).abs() - e[a]).max(0.0);
            d * d
        })
        .sum()
}

/// Minimum over `t ∈ [0, 1]` of [`box_distance_sq`] with the box centred at
/// `p0 + t (p1 - p0)`.
///
/// Each axis contributes `max(0, |c - q(t)| - e)²`, a convex piecewise
/// quadratic in `t` whose pieces change where `c - q(t) = ±e`. Between those
/// breakpoints the sum is one quadratic, minimised in closed form.
pub fn segment_box_distance_sq(c: &Vec3, p0: &Vec3, p1: &Vec3, e: &Vec3) -> f64 {
    let d = sub(p1, p0);
    let mut knots = vec![0.0, 1.0];
    for a in 0..3 {
        if d[a] != 0.0 {
            for s in [-1.0, 1.0] {
                let t = (c[a] - p0[a] - s * e[a]) / d[a];
                if t > 0.0 && t < 1.0 {
                    knots.push(t);
                }
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    let eval = |t: f64| {
        let q = std::array::from_fn(|a| p0[a] + t * d[a]);
        box_distance_sq(c, &q, e)
    };
    let mut best = f64::INFINITY;
    for w in knots.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        best = best.min(eval(t0)).min(eval(t1));
        if t1 - t0 <= 0.0 {
            continue;
        }
        // active axes on this piece contribute (g_a + h_a t)²
        let tm = 0.5 * (t0 + t1);
        let (mut qa, mut qb) = (0.0, 0.0);
        for a in 0..3 {
            let off = c[a] - p0[a] - tm * d[a];
            if off.abs() > e[a] {
                let s = off.signum();
                let g = s * (c[a] - p0[a]) - e[a];
                let h = -s * d[a];
                qa += h * h;
                qb += g * h;
            }
        }
        if qa > 0.0 {
            let t = (-qb / qa).clamp(t0, t1);
            best = best.min(eval(t));
        }
    }
    best
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    std::array::from_fn(|i| a[i] - b[i])
}

fn norm(a: &Vec3) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
