//! Online controllers built on the precomputed value functions.
//!
//! [`SafetyController`] is a least-restrictive supervisor: the nominal LQR
//! acceleration passes through unless it would carry the relative state into
//! the boundary band of the invariant set, in which case the bang-bang
//! optimal control takes over on that axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{accel_to_control, ControlLimits, RelativeState2, Subsystem2Params, TrackingControl, Vec3};
use crate::reachability::{ReachError, ValueFunction2D, ValueKind};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("interior threshold must lie strictly in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("value function for axis {axis} is unusable: {reason}")]
    InvalidValueFunction { axis: usize, reason: String },
    #[error("relative state ({r:.4}, {v:.4}) is outside the switching tube (value {value:.4})")]
    OutsideTube { r: f64, v: f64, value: f64 },
    #[error(transparent)]
    Reach(#[from] ReachError),
}

/// Which law produced an axis acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisMode {
    Nominal,
    Safety,
    Emergency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub control: TrackingControl,
    pub accel: Vec3,
    pub modes: [AxisMode; 3],
}

impl ControlOutput {
    pub fn emergency(&self) -> bool {
        self.modes.contains(&AxisMode::Emergency)
    }
}

/// Per-axis PD law `a = -k_p r - k_d v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrController {
    pub kp: Vec3,
    pub kd: Vec3,
}

impl Default for LqrController {
    fn default() -> Self {
        Self::uniform(4.0, 3.0)
    }
}

impl LqrController {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        Self {
            kp: [kp; 3],
            kd: [kd; 3],
        }
    }

    /// Closed loop `[[0, 1], [-k_p, -k_d]]` is Hurwitz iff both gains are positive.
    pub fn is_stable(&self) -> bool {
        self.kp.iter().chain(&self.kd).all(|k| *k > 0.0)
    }

    /// Unsaturated acceleration request per axis.
    pub fn accel(&self, rel: &[RelativeState2; 3]) -> Vec3 {
        std::array::from_fn(|a| -self.kp[a] * rel[a].r - self.kd[a] * rel[a].v)
    }
}

/// LQR baseline mapped through the actuator box.
pub fn lqr_control(ctrl: &LqrController, rel: &[RelativeState2; 3], limits: &ControlLimits) -> ControlOutput {
    let mapped = accel_to_control(ctrl.accel(rel), limits);
    ControlOutput {
        control: mapped.control,
        accel: crate::dynamics::control_to_accel(&mapped.control),
        modes: [AxisMode::Nominal; 3],
    }
}

/// Bang-bang input minimising `p_v · u`.
#[inline]
pub fn bang_bang(params: &Subsystem2Params, dv_grad: f64) -> f64 {
    if dv_grad > 0.0 {
        params.accel_min
    } else {
        params.accel_max
    }
}

/// Full authority toward the origin along the braking switching curve.
pub fn emergency_accel(params: &Subsystem2Params, rel: RelativeState2) -> f64 {
    let brake = if rel.v > 0.0 {
        params.net_brake_down()
    } else {
        params.net_brake_up()
    };
    let s = rel.r + rel.v * rel.v.abs() / (2.0 * brake.max(1e-9));
    if s > 0.0 {
        params.accel_min
    } else {
        params.accel_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyController {
    /// x, y and z value functions, each an invariant set.
    pub axes: [ValueFunction2D; 3],
    pub limits: ControlLimits,
    /// Safety control engages once `V >= lambda · min V`.
    pub lambda: f64,
    pub nominal: LqrController,
    /// Control period used for the one-step lookahead of the supervisor (s).
    pub period: f64,
}

impl SafetyController {
    pub fn new(
        axes: [ValueFunction2D; 3],
        limits: ControlLimits,
        lambda: f64,
        nominal: LqrController,
        period: f64,
    ) -> Result<Self, ControlError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ControlError::InvalidThreshold(lambda));
        }
        for (axis, vf) in axes.iter().enumerate() {
            let reason = if !vf.converged {
                Some("not converged")
            } else if vf.kind != ValueKind::Invariant {
                Some("not an invariant-set value function")
            } else if vf.min_value() >= 0.0 {
                Some("empty invariant set")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(ControlError::InvalidValueFunction {
                    axis,
                    reason: reason.into(),
                });
            }
        }
        Ok(Self {
            axes,
            limits,
            lambda,
            nominal,
            period,
        })
    }

    pub fn threshold(&self, axis: usize) -> f64 {
        self.lambda * self.axes[axis].min_value()
    }

    /// Supervised acceleration for one axis.
    pub fn axis_accel(&self, axis: usize, rel: RelativeState2, nominal: f64) -> (f64, AxisMode) {
        supervise(&self.axes[axis], self.threshold(axis), self.period, rel, nominal)
    }

    pub fn optimal_control(&self, rel: &[RelativeState2; 3]) -> ControlOutput {
        let nominal = self.nominal.accel(rel);
        let mut modes = [AxisMode::Nominal; 3];
        let acc: Vec3 = std::array::from_fn(|a| {
            let (u, m) = self.axis_accel(a, rel[a], nominal[a]);
            modes[a] = m;
            u
        });
        let mapped = accel_to_control(acc, &self.limits);
        ControlOutput {
            control: mapped.control,
            accel: acc,
            modes,
        }
    }
}

/// Below this `|∂V/∂v|` the value function is flat in velocity (the running
/// cost is active) and its sign carries no information.
const FLAT_GRADIENT: f64 = 1e-3;

/// Least-restrictive filter on one axis: keep `nominal` unless the state is
/// already in the band `V >= threshold` or could be pushed into it within
/// one control period by some admissible adversary.
pub fn supervise(
    vf: &ValueFunction2D,
    threshold: f64,
    period: f64,
    rel: RelativeState2,
    nominal: f64,
) -> (f64, AxisMode) {
    let p = &vf.params;
    let Ok(s) = vf.value_and_gradient(rel) else {
        return (emergency_accel(p, rel), AxisMode::Emergency);
    };
    let safe = if s.dv.abs() > FLAT_GRADIENT {
        bang_bang(p, s.dv)
    } else {
        emergency_accel(p, rel)
    };
    if s.value >= threshold {
        return (safe, AxisMode::Safety);
    }
    let u = p.clamp_accel(nominal);
    if worst_next_value(vf, rel, u, period) >= threshold {
        (safe, AxisMode::Safety)
    } else {
        (u, AxisMode::Nominal)
    }
}

/// Largest value reached after `dt` with input `u` over the adversary vertices.
fn worst_next_value(vf: &ValueFunction2D, rel: RelativeState2, u: f64, dt: f64) -> f64 {
    let p = &vf.params;
    let w = p.velocity_adversary();
    let mut worst = f64::NEG_INFINITY;
    for wv in [-w, w] {
        for d in [-p.da_max, p.da_max] {
            let a = u - d;
            let next = RelativeState2::new(rel.r + (rel.v - wv) * dt + 0.5 * a * dt * dt, rel.v + a * dt);
            worst = worst.max(vf.value(next).unwrap_or(f64::INFINITY));
        }
    }
    worst
}

/// Bang-bang control from the tube gradient during a planner switch.
pub fn switching_control(ssb: &ValueFunction2D, rel: RelativeState2) -> Result<f64, ControlError> {
    let s = ssb.value_and_gradient(rel)?;
    if s.value > 0.0 {
        return Err(ControlError::OutsideTube {
            r: rel.r,
            v: rel.v,
            value: s.value,
        });
    }
    Ok(bang_bang(&ssb.params, s.dv))
}
