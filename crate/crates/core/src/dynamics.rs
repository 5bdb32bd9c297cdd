//! Tracking, planning and relative dynamics for the near-hover quadrotor.
//!
//! The tracker is a 6D point-mass model driven through roll, pitch and
//! thrust; each planner is a 3D kinematic point with bounded per-axis speed.
//! Their difference decomposes into three independent 2D double-integrator
//! subsystems `(r, v)` per axis, which is what every value function in this
//! crate is computed over.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gravitational acceleration (m/s²).
pub const GRAVITY: f64 = 9.81;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("control out of bounds: {0}")]
    ControlOutOfBounds(String),
    #[error("input out of bounds: {0}")]
    InputOutOfBounds(String),
    #[error("invalid subsystem parameters: {0}")]
    InvalidParams(String),
}

/// Full tracker state: position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingState6 {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl TrackingState6 {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: [0.0; 3],
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        let p = self.position;
        let v = self.velocity;
        [p[0], p[1], p[2], v[0], v[1], v[2]]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            position: [a[0], a[1], a[2]],
            velocity: [a[3], a[4], a[5]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }
}

/// Attitude/thrust command. `roll` tilts the thrust vector into x, `pitch`
/// into −y (yaw is held at zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingControl {
    pub roll: f64,
    pub pitch: f64,
    pub thrust: f64,
}

impl TrackingControl {
    pub fn hover() -> Self {
        Self {
            roll: 0.0,
            pitch: 0.0,
            thrust: GRAVITY,
        }
    }
}

/// Actuator limits of the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits {
    pub roll_max: f64,
    pub pitch_max: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self {
            roll_max: 0.15,
            pitch_max: 0.15,
            thrust_min: 7.81,
            thrust_max: 11.81,
        }
    }
}

impl ControlLimits {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.roll_max > 0.0
            && self.roll_max < std::f64::consts::FRAC_PI_2
            && self.pitch_max > 0.0
            && self.pitch_max < std::f64::consts::FRAC_PI_2
            && self.thrust_min < GRAVITY
            && self.thrust_max > GRAVITY;
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidParams(format!(
                "control limits must bracket hover: {self:?}"
            )))
        }
    }

    pub fn contains(&self, c: &TrackingControl) -> bool {
        const EPS: f64 = 1e-12;
        c.roll.abs() <= self.roll_max + EPS
            && c.pitch.abs() <= self.pitch_max + EPS
            && c.thrust >= self.thrust_min - EPS
            && c.thrust <= self.thrust_max + EPS
    }

    /// Admissible acceleration interval `[lo, hi]` for each axis.
    pub fn accel_range(&self) -> [(f64, f64); 3] {
        let ax = GRAVITY * self.roll_max.tan();
        let ay = GRAVITY * self.pitch_max.tan();
        [
            (-ax, ax),
            (-ay, ay),
            (self.thrust_min - GRAVITY, self.thrust_max - GRAVITY),
        ]
    }
}

/// Velocity and acceleration disturbance acting on the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance6 {
    pub dv: Vec3,
    pub da: Vec3,
}

/// Per-axis disturbance magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceBounds {
    pub dv_max: f64,
    pub da_max: f64,
}

impl Default for DisturbanceBounds {
    fn default() -> Self {
        Self {
            dv_max: 0.1,
            da_max: 0.1,
        }
    }
}

impl DisturbanceBounds {
    pub fn contains(&self, d: &Disturbance6) -> bool {
        const EPS: f64 = 1e-12;
        d.dv.iter().all(|x| x.abs() <= self.dv_max + EPS) && d.da.iter().all(|x| x.abs() <= self.da_max + EPS)
    }
}

/// Planner position.
pub type PlanningState3 = Vec3;

/// Maximum per-axis speed of a kinematic planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerSpeed {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl PlannerSpeed {
    pub fn new(bx: f64, by: f64, bz: f64) -> Result<Self, DynamicsError> {
        let s = Self { bx, by, bz };
        if s.as_array().iter().all(|b| b.is_finite() && *b > 0.0) {
            Ok(s)
        } else {
            Err(DynamicsError::InvalidParams(format!(
                "planner speeds must be positive: {s:?}"
            )))
        }
    }

    pub fn as_array(&self) -> Vec3 {
        [self.bx, self.by, self.bz]
    }

    /// True when `self` is strictly faster than `other` on every axis.
    pub fn strictly_faster_than(&self, other: &PlannerSpeed) -> bool {
        self.bx > other.bx && self.by > other.by && self.bz > other.bz
    }
}

/// One axis of the relative system: position error and tracker velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeState2 {
    pub r: f64,
    pub v: f64,
}

impl RelativeState2 {
    pub fn new(r: f64, v: f64) -> Self {
        Self { r, v }
    }
}

/// Parameters of one 2D relative subsystem.
///
/// The tracker's acceleration input lies in `[accel_min, accel_max]`
/// (asymmetric for the thrust channel), the planner velocity in
/// `[-b_max, b_max]`, and the disturbances in `[-dv_max, dv_max]` and
/// `[-da_max, da_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subsystem2Params {
    pub accel_min: f64,
    pub accel_max: f64,
    pub b_max: f64,
    pub dv_max: f64,
    pub da_max: f64,
    /// Constant added when mapping acceleration back to the physical input
    /// (g for the thrust channel, 0 for the tilt channels).
    pub gravity_offset: f64,
}

impl Subsystem2Params {
    pub fn new(
        accel_min: f64,
        accel_max: f64,
        b_max: f64,
        dv_max: f64,
        da_max: f64,
        gravity_offset: f64,
    ) -> Result<Self, DynamicsError> {
        let p = Self {
            accel_min,
            accel_max,
            b_max,
            dv_max,
            da_max,
            gravity_offset,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let finite = [
            self.accel_min,
            self.accel_max,
            self.b_max,
            self.dv_max,
            self.da_max,
            self.gravity_offset,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(DynamicsError::InvalidParams("non-finite parameter".into()));
        }
        if self.b_max < 0.0 || self.dv_max < 0.0 || self.da_max < 0.0 {
            return Err(DynamicsError::InvalidParams(
                "speed and disturbance bounds must be non-negative".into(),
            ));
        }
        if !(self.accel_min < 0.0 && self.accel_max > 0.0) {
            return Err(DynamicsError::InvalidParams(
                "acceleration authority must bracket zero".into(),
            ));
        }
        if self.accel_max <= self.da_max || -self.accel_min <= self.da_max {
            return Err(DynamicsError::InvalidParams(format!(
                "control authority [{}, {}] does not dominate acceleration disturbance {}",
                self.accel_min, self.accel_max, self.da_max
            )));
        }
        Ok(())
    }

    /// x/y subsystem of the quadrotor for planner speed `b_max` on that axis.
    pub fn tilt_axis(tilt_max: f64, b_max: f64, dist: DisturbanceBounds) -> Result<Self, DynamicsError> {
        let a = GRAVITY * tilt_max.tan();
        Self::new(-a, a, b_max, dist.dv_max, dist.da_max, 0.0)
    }

    /// z subsystem of the quadrotor.
    pub fn thrust_axis(limits: &ControlLimits, b_max: f64, dist: DisturbanceBounds) -> Result<Self, DynamicsError> {
        Self::new(
            limits.thrust_min - GRAVITY,
            limits.thrust_max - GRAVITY,
            b_max,
            dist.dv_max,
            dist.da_max,
            GRAVITY,
        )
    }

    /// Same subsystem with a different planner speed.
    pub fn with_planner_speed(&self, b_max: f64) -> Self {
        Self { b_max, ..*self }
    }

    /// Worst-case combined velocity adversary (planner plus disturbance).
    pub fn velocity_adversary(&self) -> f64 {
        self.b_max + self.dv_max
    }

    /// Net deceleration available to stop a positive velocity under worst
    /// acceleration disturbance.
    pub fn net_brake_down(&self) -> f64 {
        -self.accel_min - self.da_max
    }

    /// Net acceleration available to stop a negative velocity.
    pub fn net_brake_up(&self) -> f64 {
        self.accel_max - self.da_max
    }

    pub fn is_symmetric(&self) -> bool {
        (self.accel_max + self.accel_min).abs() < 1e-12
    }

    pub fn clamp_accel(&self, u: f64) -> f64 {
        u.clamp(self.accel_min, self.accel_max)
    }

    /// Compares everything except the gravity offset with a relative tolerance.
    pub fn approx_eq(&self, other: &Self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        close(self.accel_min, other.accel_min)
            && close(self.accel_max, other.accel_max)
            && close(self.b_max, other.b_max)
            && close(self.dv_max, other.dv_max)
            && close(self.da_max, other.da_max)
            && close(self.gravity_offset, other.gravity_offset)
    }
}

/// Derivative of the 6D tracker state.
pub fn tracker_derivative(
    state: &TrackingState6,
    control: &TrackingControl,
    dist: &Disturbance6,
    limits: &ControlLimits,
) -> Result<[f64; 6], DynamicsError> {
    if !limits.contains(control) {
        return Err(DynamicsError::ControlOutOfBounds(format!("{control:?}")));
    }
    let acc = control_to_accel(control);
    let v = state.velocity;
    Ok([
        v[0] - dist.dv[0],
        v[1] - dist.dv[1],
        v[2] - dist.dv[2],
        acc[0] - dist.da[0],
        acc[1] - dist.da[1],
        acc[2] - dist.da[2],
    ])
}

/// Derivative of one relative subsystem: `(v - dv - b, u - da)`.
pub fn relative_derivative(
    params: &Subsystem2Params,
    rel: RelativeState2,
    u: f64,
    b: f64,
    dv: f64,
    da: f64,
) -> Result<[f64; 2], DynamicsError> {
    const EPS: f64 = 1e-12;
    if u < params.accel_min - EPS || u > params.accel_max + EPS {
        return Err(DynamicsError::InputOutOfBounds(format!("u = {u}")));
    }
    if b.abs() > params.b_max + EPS {
        return Err(DynamicsError::InputOutOfBounds(format!("b = {b}")));
    }
    if dv.abs() > params.dv_max + EPS || da.abs() > params.da_max + EPS {
        return Err(DynamicsError::InputOutOfBounds(format!("disturbance ({dv}, {da})")));
    }
    Ok([rel.v - dv - b, u - da])
}

/// Relative state per axis: tracker minus the planner lifted into the
/// tracker's position slots. Velocity slots are unmatched.
pub fn lift_and_subtract(tracker: &TrackingState6, planner: &PlanningState3) -> [RelativeState2; 3] {
    std::array::from_fn(|a| RelativeState2 {
        r: tracker.position[a] - planner[a],
        v: tracker.velocity[a],
    })
}

/// Inverse of [`lift_and_subtract`].
pub fn recover_tracker(rel: &[RelativeState2; 3], planner: &PlanningState3) -> TrackingState6 {
    TrackingState6 {
        position: std::array::from_fn(|a| rel[a].r + planner[a]),
        velocity: std::array::from_fn(|a| rel[a].v),
    }
}

/// Per-axis accelerations `(g tan θ, -g tan φ, T - g)` produced by a control.
pub fn control_to_accel(control: &TrackingControl) -> Vec3 {
    [
        GRAVITY * control.roll.tan(),
        -GRAVITY * control.pitch.tan(),
        control.thrust - GRAVITY,
    ]
}

/// Result of mapping requested accelerations onto the actuator box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedControl {
    pub control: TrackingControl,
    pub saturated: bool,
}

/// Inverse of [`control_to_accel`], saturating at the actuator limits.
pub fn accel_to_control(acc: Vec3, limits: &ControlLimits) -> MappedControl {
    let ranges = limits.accel_range();
    let mut saturated = false;
    let clamped: Vec3 = std::array::from_fn(|a| {
        let (lo, hi) = ranges[a];
        let c = acc[a].clamp(lo, hi);
        if (c - acc[a]).abs() > 1e-12 {
            saturated = true;
        }
        c
    });
    let control = TrackingControl {
        roll: (clamped[0] / GRAVITY).atan().clamp(-limits.roll_max, limits.roll_max),
        pitch: (-clamped[1] / GRAVITY)
            .atan()
            .clamp(-limits.pitch_max, limits.pitch_max),
        thrust: (clamped[2] + GRAVITY).clamp(limits.thrust_min, limits.thrust_max),
    };
    MappedControl { control, saturated }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize, F>(f: F, x: &[f64; N], dt: f64) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let add = |a: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + h * k[i]) };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, 0.5 * dt));
    let k3 = f(&add(x, &k2, 0.5 * dt));
    let k4 = f(&add(x, &k3, dt));
    std::array::from_fn(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Advances the tracker by `dt` with piecewise-constant control and disturbance.
pub fn step_tracker(
    state: &TrackingState6,
    control: &TrackingControl,
    dist: &Disturbance6,
    limits: &ControlLimits,
    dt: f64,
) -> Result<TrackingState6, DynamicsError> {
    // validates once; the derivative closure below cannot fail afterwards
    tracker_derivative(state, control, dist, limits)?;
    let acc = control_to_accel(control);
    let next = rk4_step(
        |x: &[f64; 6]| {
            [
                x[3] - dist.dv[0],
                x[4] - dist.dv[1],
                x[5] - dist.dv[2],
                acc[0] - dist.da[0],
                acc[1] - dist.da[1],
                acc[2] - dist.da[2],
            ]
        },
        &state.as_array(),
        dt,
    );
    Ok(TrackingState6::from_array(next))
}

/// Advances one relative subsystem by `dt` with constant inputs.
pub fn step_relative(
    params: &Subsystem2Params,
    rel: RelativeState2,
    u: f64,
    b: f64,
    dv: f64,
    da: f64,
    dt: f64,
) -> Result<RelativeState2, DynamicsError> {
    relative_derivative(params, rel, u, b, dv, da)?;
    let next = rk4_step(|x: &[f64; 2]| [x[1] - dv - b, u - da], &[rel.r, rel.v], dt);
    Ok(RelativeState2::new(next[0], next[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hover_is_equilibrium() {
        let s = TrackingState6::at_rest([1.0, -2.0, 3.0]);
        let d = tracker_derivative(
            &s,
            &TrackingControl::hover(),
            &Disturbance6::default(),
            &ControlLimits::default(),
        )
        .unwrap();
        assert!(d.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn roll_produces_x_acceleration() {
        let c = TrackingControl {
            roll: 0.15,
            pitch: 0.0,
            thrust: GRAVITY,
        };
        let d = tracker_derivative(
            &TrackingState6::default(),
            &c,
            &Disturbance6::default(),
            &ControlLimits::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(d[3], 1.4827, epsilon = 1e-4);
        assert_abs_diff_eq!(d[4], 0.0);
        assert_abs_diff_eq!(d[5], 0.0);
    }

    #[test]
    fn velocity_disturbance_is_additive() {
        let s = TrackingState6::new([0.0; 3], [1.0, 0.0, 0.0]);
        let dist = Disturbance6 {
            dv: [0.2, 0.0, 0.0],
            da: [0.0; 3],
        };
        let d = tracker_derivative(&s, &TrackingControl::hover(), &dist, &ControlLimits::default()).unwrap();
        assert_abs_diff_eq!(d[0], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn out_of_bound_control_rejected() {
        let c = TrackingControl {
            roll: 0.2,
            pitch: 0.0,
            thrust: GRAVITY,
        };
        assert!(tracker_derivative(
            &TrackingState6::default(),
            &c,
            &Disturbance6::default(),
            &ControlLimits::default()
        )
        .is_err());
    }

    fn xy_params() -> Subsystem2Params {
        Subsystem2Params::tilt_axis(0.15, 0.5, DisturbanceBounds::default()).unwrap()
    }

    #[test]
    fn relative_derivative_examples() {
        let p = Subsystem2Params::tilt_axis(
            0.15,
            0.5,
            DisturbanceBounds {
                dv_max: 0.1,
                da_max: 0.2,
            },
        )
        .unwrap();
        assert_eq!(
            relative_derivative(&p, RelativeState2::new(0.0, 0.0), 0.0, 0.0, 0.0, 0.0).unwrap(),
            [0.0, 0.0]
        );
        let u = p.accel_max;
        let d = relative_derivative(&p, RelativeState2::new(0.0, 1.0), u, 0.5, 0.1, 0.2).unwrap();
        assert_abs_diff_eq!(d[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 1.2827, epsilon = 1e-4);
        let shifted = relative_derivative(&p, RelativeState2::new(1.0, 1.0), u, 0.5, 0.1, 0.2).unwrap();
        assert_eq!(d, shifted);
        assert!(relative_derivative(&p, RelativeState2::default(), 0.0, 0.6, 0.0, 0.0).is_err());
    }

    #[test]
    fn authority_must_dominate_disturbance() {
        let err = Subsystem2Params::new(-0.05, 0.05, 0.5, 0.1, 0.1, 0.0);
        assert!(matches!(err, Err(DynamicsError::InvalidParams(_))));
        assert!(xy_params().validate().is_ok());
    }

    #[test]
    fn lift_and_subtract_examples() {
        let at = TrackingState6::at_rest([1.0, 1.0, 1.0]);
        let rel = lift_and_subtract(&at, &[1.0, 1.0, 1.0]);
        assert!(rel.iter().all(|r| r.r == 0.0 && r.v == 0.0));

        let t = TrackingState6::new([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
        let rel = lift_and_subtract(&t, &[1.0, 1.0, 1.0]);
        assert_eq!(rel[0], RelativeState2::new(0.0, 0.1));
        assert_eq!(rel[1], RelativeState2::new(1.0, 0.2));
        assert_eq!(rel[2], RelativeState2::new(2.0, 0.3));
        assert_eq!(recover_tracker(&rel, &[1.0, 1.0, 1.0]), t);
    }

    #[test]
    fn accel_mapping() {
        let lim = ControlLimits::default();
        assert_eq!(control_to_accel(&TrackingControl::hover()), [0.0, 0.0, 0.0]);
        let m = accel_to_control([GRAVITY * 0.15f64.tan(), 0.0, 0.0], &lim);
        assert_abs_diff_eq!(m.control.roll, 0.15, epsilon = 1e-12);
        assert!(!m.saturated);
        let m = accel_to_control([1.4827, 0.0, 0.0], &lim);
        assert_abs_diff_eq!(m.control.roll, 0.15, epsilon = 1e-4);

        let m = accel_to_control([0.0, 0.0, 2.5], &lim);
        assert!(m.saturated);
        assert_abs_diff_eq!(control_to_accel(&m.control)[2], 2.0, epsilon = 1e-9);
        assert!(lim.contains(&m.control));
    }

    #[test]
    fn rk4_integrates_double_integrator_exactly() {
        let p = xy_params();
        let mut s = RelativeState2::new(0.3, -0.2);
        for _ in 0..100 {
            s = step_relative(&p, s, 1.0, 0.25, 0.05, 0.1, 0.01).unwrap();
        }
        // closed form over 1 s with constant inputs
        let acc = 1.0 - 0.1;
        let r = 0.3 + (-0.2 - 0.05 - 0.25) * 1.0 + 0.5 * acc;
        assert_abs_diff_eq!(s.r, r, epsilon = 1e-10);
        assert_abs_diff_eq!(s.v, -0.2 + acc, epsilon = 1e-10);
    }
}
