use serde::{Deserialize, Serialize};

use super::{Grid2, ReachError};
use crate::dynamics::{RelativeState2, Subsystem2Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    /// Infinite-horizon controlled-invariant set (tracking error bound).
    Invariant,
    /// Backward reachable tube into a smaller invariant set (switching bound).
    Tube,
}

impl ValueKind {
    pub fn code(self) -> u8 {
        match self {
            ValueKind::Invariant => 0,
            ValueKind::Tube => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ValueKind::Invariant),
            1 => Some(ValueKind::Tube),
            _ => None,
        }
    }
}

/// Gridded value function.
///
/// For invariant sets the zero level is the solver's estimate of the
/// invariant-set boundary, and the certified set used for bounds and control
/// is `{V <= margin}`, a few cells larger. Tubes have `margin = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction2D {
    pub grid: Grid2,
    pub values: Vec<f64>,
    pub kind: ValueKind,
    pub params: Subsystem2Params,
    /// Tube horizon reached (s); zero for invariant sets.
    pub horizon: f64,
    pub converged: bool,
    /// Raw value that was subtracted to place the set boundary at zero.
    pub level: f64,
    pub margin: f64,
}

/// Interpolated value and gradient at a relative state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueSample {
    pub value: f64,
    pub dr: f64,
    pub dv: f64,
}

impl ValueFunction2D {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Node-centred gradient: central differences inside, one-sided at edges.
    fn node_gradient(&self, i: usize, j: usize) -> (f64, f64) {
        let g = &self.grid;
        let (i0, i1) = (i.saturating_sub(1), (i + 1).min(g.nr - 1));
        let (j0, j1) = (j.saturating_sub(1), (j + 1).min(g.nv - 1));
        let gr = (self.at(i1, j) - self.at(i0, j)) / ((i1 - i0) as f64 * g.dr());
        let gv = (self.at(i, j1) - self.at(i, j0)) / ((j1 - j0) as f64 * g.dv());
        (gr, gv)
    }

    fn cell_of(&self, r: f64, v: f64) -> (usize, usize, f64, f64) {
        let g = &self.grid;
        // snap to nodes so node lookups are exact despite rounding in r_at/v_at
        let snap = |f: f64| if (f - f.round()).abs() < 1e-9 { f.round() } else { f };
        let fr = snap((r - g.r_min) / g.dr()).clamp(0.0, (g.nr - 1) as f64);
        let fv = snap((v - g.v_min) / g.dv()).clamp(0.0, (g.nv - 1) as f64);
        let i = (fr.floor() as usize).min(g.nr - 2);
        let j = (fv.floor() as usize).min(g.nv - 2);
        (i, j, fr - i as f64, fv - j as f64)
    }

    fn bilinear(f00: f64, f10: f64, f01: f64, f11: f64, tr: f64, tv: f64) -> f64 {
        (1.0 - tr) * ((1.0 - tv) * f00 + tv * f01) + tr * ((1.0 - tv) * f10 + tv * f11)
    }

    /// Bilinear value only.
    pub fn value(&self, rel: RelativeState2) -> Result<f64, ReachError> {
        if !self.grid.contains(rel.r, rel.v) {
            return Err(ReachError::OutOfDomain { r: rel.r, v: rel.v });
        }
        let (i, j, tr, tv) = self.cell_of(rel.r, rel.v);
        Ok(Self::bilinear(
            self.at(i, j),
            self.at(i + 1, j),
            self.at(i, j + 1),
            self.at(i + 1, j + 1),
            tr,
            tv,
        ))
    }

    /// Value and gradient, both bilinearly interpolated from nodes.
    pub fn value_and_gradient(&self, rel: RelativeState2) -> Result<ValueSample, ReachError> {
        if !self.grid.contains(rel.r, rel.v) {
            return Err(ReachError::OutOfDomain { r: rel.r, v: rel.v });
        }
        let (i, j, tr, tv) = self.cell_of(rel.r, rel.v);
        let value = Self::bilinear(
            self.at(i, j),
            self.at(i + 1, j),
            self.at(i, j + 1),
            self.at(i + 1, j + 1),
            tr,
            tv,
        );
        let g00 = self.node_gradient(i, j);
        let g10 = self.node_gradient(i + 1, j);
        let g01 = self.node_gradient(i, j + 1);
        let g11 = self.node_gradient(i + 1, j + 1);
        Ok(ValueSample {
            value,
            dr: Self::bilinear(g00.0, g10.0, g01.0, g11.0, tr, tv),
            dv: Self::bilinear(g00.1, g10.1, g01.1, g11.1, tr, tv),
        })
    }

    /// Membership in the certified set.
    pub fn contains(&self, rel: RelativeState2) -> bool {
        self.value(rel).map(|v| v <= self.margin).unwrap_or(false)
    }

    /// Iterator over node coordinates inside the certified set.
    pub fn set_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let g = self.grid;
        (0..g.nr)
            .flat_map(move |i| (0..g.nv).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.at(i, j) <= self.margin)
    }

    /// Bounding box `(r_lo, r_hi, v_lo, v_hi)` of the certified node set.
    pub fn set_extent(&self) -> Option<(f64, f64, f64, f64)> {
        let mut ext: Option<(f64, f64, f64, f64)> = None;
        for (i, j) in self.set_nodes() {
            let (r, v) = (self.grid.r_at(i), self.grid.v_at(j));
            ext = Some(match ext {
                None => (r, r, v, v),
                Some((a, b, c, d)) => (a.min(r), b.max(r), c.min(v), d.max(v)),
            });
        }
        ext
    }

    /// Node-wise containment of certified sets.
    pub fn set_within(&self, other: &ValueFunction2D) -> Result<bool, ReachError> {
        if self.grid != other.grid {
            return Err(ReachError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| *a > self.margin || *b <= other.margin))
    }
}

/// Position half-width of the certified set: the largest `|r|` over member
/// nodes, rounded outward by one cell.
pub fn extract_bound(vf: &ValueFunction2D) -> Result<f64, ReachError> {
    if !vf.converged {
        return Err(ReachError::Unconverged);
    }
    let (lo, hi, _, _) = vf.set_extent().ok_or(ReachError::EmptySet)?;
    Ok(lo.abs().max(hi.abs()) + vf.grid.dr())
}

/// Switching bound: the position half-width of the tube restricted to the
/// larger certified set, rounded outward by one cell.
///
/// A switch starts inside `large`'s set, which stays invariant under the
/// slower planner, so states of the tube outside it are never visited.
pub fn extract_switching_bound(tube: &ValueFunction2D, large: &ValueFunction2D) -> Result<f64, ReachError> {
    if tube.grid != large.grid {
        return Err(ReachError::GridMismatch);
    }
    if !tube.converged || !large.converged {
        return Err(ReachError::Unconverged);
    }
    let g = tube.grid;
    let r = (0..g.len())
        .filter(|&k| tube.values[k] <= tube.margin && large.values[k] <= large.margin)
        .map(|k| g.r_at(k / g.nv).abs())
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))))
        .ok_or(ReachError::EmptySet)?;
    Ok(r + g.dr())
}

/// Points where the bilinear interpolant crosses zero along grid edges.
/// This traces the solver's invariant-set estimate, not the certified set.
pub fn zero_level_crossings(vf: &ValueFunction2D) -> Vec<(f64, f64)> {
    let g = vf.grid;
    let mut out = Vec::new();
    let lerp = |a: f64, b: f64| a / (a - b);
    for i in 0..g.nr {
        for j in 0..g.nv {
            let a = vf.at(i, j);
            if i + 1 < g.nr {
                let b = vf.at(i + 1, j);
                if (a <= 0.0) != (b <= 0.0) {
                    let t = lerp(a, b);
                    out.push((g.r_at(i) + t * g.dr(), g.v_at(j)));
                }
            }
            if j + 1 < g.nv {
                let b = vf.at(i, j + 1);
                if (a <= 0.0) != (b <= 0.0) {
                    let t = lerp(a, b);
                    out.push((g.r_at(i), g.v_at(j) + t * g.dv()));
                }
            }
        }
    }
    out
}
