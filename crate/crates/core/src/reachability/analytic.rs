use super::ReachError;
use crate::dynamics::Subsystem2Params;

/// Closed-form controlled-invariant set of the relative double integrator.
///
/// With combined velocity adversary `W = b_max + dv_max` and net braking
/// accelerations `a_dn`, `a_up`, the set of states that can be held inside
/// `|r| <= R` is bounded by two parabolic arcs:
///
/// ```text
///   r + max(0, v + W)² / (2 a_dn) <= R      (stopping before +R)
///  -r + max(0, W - v)² / (2 a_up) <= R      (stopping before -R)
/// ```
///
/// The arcs only enclose an invariant region once `R >= W² / min(a_dn, a_up)`:
/// below that the adversary can alternate its push and break out at the
/// corners where both arcs are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticInvariantSet {
    pub params: Subsystem2Params,
    /// Combined velocity adversary.
    pub w: f64,
    pub brake_down: f64,
    pub brake_up: f64,
    /// Position half-width the set holds.
    pub half_width: f64,
}

impl AnalyticInvariantSet {
    /// The smallest invariant set of this family.
    pub fn new(params: &Subsystem2Params) -> Result<Self, ReachError> {
        let a_dn = params.net_brake_down();
        let a_up = params.net_brake_up();
        if a_dn <= 0.0 || a_up <= 0.0 {
            return Err(ReachError::Params(crate::dynamics::DynamicsError::InvalidParams(
                "no positive net braking acceleration: no bounded invariant set".into(),
            )));
        }
        let w = params.velocity_adversary();
        Ok(Self {
            params: *params,
            w,
            brake_down: a_dn,
            brake_up: a_up,
            half_width: Self::minimal_half_width(w, a_dn, a_up),
        })
    }

    /// The member of the family holding `|r| <= half_width`; the width is
    /// raised to the minimal one if smaller.
    pub fn with_half_width(params: &Subsystem2Params, half_width: f64) -> Result<Self, ReachError> {
        let mut s = Self::new(params)?;
        s.half_width = half_width.max(s.half_width);
        Ok(s)
    }

    fn minimal_half_width(w: f64, a_dn: f64, a_up: f64) -> f64 {
        w * w / a_dn.min(a_up)
    }

    pub fn minimal(&self) -> f64 {
        Self::minimal_half_width(self.w, self.brake_down, self.brake_up)
    }

    /// Right arc: the largest admissible `r` at velocity `v`.
    pub fn r_upper(&self, v: f64) -> f64 {
        let s = (v + self.w).max(0.0);
        self.half_width - s * s / (2.0 * self.brake_down)
    }

    /// Left arc: the smallest admissible `r` at velocity `v`.
    pub fn r_lower(&self, v: f64) -> f64 {
        let s = (self.w - v).max(0.0);
        -self.half_width + s * s / (2.0 * self.brake_up)
    }

    pub fn contains(&self, r: f64, v: f64) -> bool {
        r <= self.r_upper(v) && r >= self.r_lower(v)
    }

    /// Signed violation: `<= 0` inside, in units of position.
    pub fn margin(&self, r: f64, v: f64) -> f64 {
        (r - self.r_upper(v)).max(self.r_lower(v) - r)
    }

    /// Velocity range `[v_lo, v_hi]` spanned by the set.
    pub fn velocity_span(&self) -> (f64, f64) {
        let v_hi = -self.w + (4.0 * self.brake_down * self.half_width).sqrt();
        let v_lo = self.w - (4.0 * self.brake_up * self.half_width).sqrt();
        (v_lo, v_hi)
    }

    /// Closed boundary polyline with `n` samples per arc.
    pub fn boundary(&self, n: usize) -> Vec<(f64, f64)> {
        let (v_lo, v_hi) = self.velocity_span();
        let n = n.max(2);
        let mut pts = Vec::with_capacity(2 * n);
        for k in 0..n {
            let v = v_lo + (v_hi - v_lo) * k as f64 / (n - 1) as f64;
            pts.push((self.r_upper(v), v));
        }
        for k in (0..n).rev() {
            let v = v_lo + (v_hi - v_lo) * k as f64 / (n - 1) as f64;
            pts.push((self.r_lower(v), v));
        }
        pts
    }
}
