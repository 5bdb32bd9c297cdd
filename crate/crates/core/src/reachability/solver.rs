use rayon::prelude::*;

use super::{Grid2, ReachError, ValueFunction2D, ValueKind};
use crate::dynamics::Subsystem2Params;

/// Numerical settings shared by the invariant-set and tube solvers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverSettings {
    /// Convergence threshold on the largest per-node value change of one sweep.
    pub tol: f64,
    pub max_iterations: usize,
    pub cfl: f64,
    /// The set is `{V <= c}` for the smallest `c` whose sublevel set reaches
    /// `|r| >= c - level_slack_cells · dr`.
    pub level_slack_cells: f64,
    /// Certified sets extend this many cells (in value) past the zero level.
    pub safety_margin_cells: f64,
    /// Tube growth stops with an error past this horizon (s).
    pub horizon_cap: f64,
    /// Spatial/temporal order: 1 (upwind, forward Euler) or 2 (ENO2, Heun).
    pub order: u8,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iterations: 20_000,
            cfl: 0.5,
            level_slack_cells: 0.5,
            safety_margin_cells: 2.0,
            horizon_cap: 30.0,
            order: 2,
        }
    }
}

/// `min_u max_{b, dv, da} p · f` for the relative double integrator.
///
/// The tracker input minimises; planner speed and both disturbances
/// maximise. Each optimum sits at a bound, picked by the sign of the
/// matching costate component.
#[inline]
pub fn hamiltonian(p: &Subsystem2Params, v: f64, pr: f64, pv: f64) -> f64 {
    let u_term = if pv >= 0.0 { pv * p.accel_min } else { pv * p.accel_max };
    pr * v + p.velocity_adversary() * pr.abs() + p.da_max * pv.abs() + u_term
}

/// Flux `c·p̄ + |c|·(p⁺ - p⁻)/2`: the Lax-Friedrichs form with the
/// dissipation coefficient of the active input vertex, which reduces to the
/// upwind derivative for that vertex.
#[inline]
fn upwind(c: f64, pm: f64, pp: f64) -> f64 {
    0.5 * c * (pm + pp) + 0.5 * c.abs() * (pp - pm)
}

/// Monotone numerical Hamiltonian for `V_t = H(x, ∇V)`.
///
/// `H` separates per axis. The position term is `max_w (v - w)·p_r` over
/// the combined planner/disturbance vertices `w = ±W`; the velocity term is
/// `min_u max_d (u - d)·p_v` over the bang-bang input and disturbance
/// vertices. Each vertex flux is upwinded, and min/max of monotone fluxes
/// stay monotone.
struct HjScheme<'a> {
    grid: Grid2,
    params: &'a Subsystem2Params,
    dt: f64,
    order: u8,
}

impl<'a> HjScheme<'a> {
    fn new(grid: Grid2, params: &'a Subsystem2Params, cfl: f64, order: u8) -> Self {
        let vmax = grid.v_min.abs().max(grid.v_max.abs());
        let alpha_r = vmax + params.velocity_adversary();
        let alpha_v = params.accel_min.abs().max(params.accel_max.abs()) + params.da_max;
        let dt = cfl / (alpha_r / grid.dr() + alpha_v / grid.dv());
        Self {
            grid,
            params,
            dt,
            order,
        }
    }

    #[inline]
    fn numerical_hamiltonian(&self, v: f64, pr_m: f64, pr_p: f64, pv_m: f64, pv_p: f64) -> f64 {
        let p = self.params;
        let w = p.velocity_adversary();
        let h_r = upwind(v - w, pr_m, pr_p).max(upwind(v + w, pr_m, pr_p));
        let h_v = |u: f64| upwind(u - p.da_max, pv_m, pv_p).max(upwind(u + p.da_max, pv_m, pv_p));
        h_r + h_v(p.accel_min).min(h_v(p.accel_max))
    }

    /// One time step. `update(v, Δt·Ĥ, k)` applies the max/min constraint
    /// of the formulation; second order uses Heun's two-stage average.
    fn advance<F>(&self, values: &[f64], rate: &mut [f64], update: F) -> Vec<f64>
    where
        F: Fn(f64, f64, usize) -> f64 + Sync,
    {
        let stage = |src: &[f64], rate: &mut [f64]| -> Vec<f64> {
            self.rate(src, rate);
            src.par_iter()
                .zip(rate.par_iter())
                .enumerate()
                .map(|(k, (v, h))| update(*v, self.dt * h, k))
                .collect()
        };
        let first = stage(values, rate);
        if self.order < 2 {
            return first;
        }
        let second = stage(&first, rate);
        values
            .par_iter()
            .zip(second.par_iter())
            .enumerate()
            .map(|(k, (a, b))| update(*a, 0.5 * (b - a), k))
            .collect()
    }

    /// Fills `out` with the numerical Hamiltonian at every node.
    fn rate(&self, values: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let (dr, dv) = (g.dr(), g.dv());
        let second = self.order >= 2;
        out.par_chunks_mut(g.nv).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                let along_r = |k: isize| {
                    let ii = i as isize + k;
                    (ii >= 0 && (ii as usize) < g.nr).then(|| values[g.index(ii as usize, j)])
                };
                let along_v = |k: isize| {
                    let jj = j as isize + k;
                    (jj >= 0 && (jj as usize) < g.nv).then(|| values[g.index(i, jj as usize)])
                };
                let (pr_m, pr_p) = one_sided(along_r, dr, second);
                let (pv_m, pv_p) = one_sided(along_v, dv, second);
                *slot = self.numerical_hamiltonian(g.v_at(j), pr_m, pr_p, pv_m, pv_p);
            }
        });
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Left and right derivatives along one axis. `at(k)` is the value `k`
/// nodes away. Missing neighbours at the grid edge are mirrored (linear
/// extrapolation); the second-order correction is ENO with minmod limiting.
fn one_sided(at: impl Fn(isize) -> Option<f64>, h: f64, second: bool) -> (f64, f64) {
    let c = at(0).expect("centre node");
    let (l1, r1) = (at(-1), at(1));
    let mut dm = l1.map(|l| (c - l) / h);
    let mut dp = r1.map(|r| (r - c) / h);
    if second {
        if let (Some(l1), Some(r1)) = (l1, r1) {
            let c0 = r1 - 2.0 * c + l1;
            if let (Some(d), Some(l2)) = (dm.as_mut(), at(-2)) {
                *d += minmod(c - 2.0 * l1 + l2, c0) / (2.0 * h);
            }
            if let (Some(d), Some(r2)) = (dp.as_mut(), at(2)) {
                *d -= minmod(r2 - 2.0 * r1 + c, c0) / (2.0 * h);
            }
        }
    }
    match (dm, dp) {
        (Some(m), Some(p)) => (m, p),
        (None, Some(p)) => (p, p),
        (Some(m), None) => (m, m),
        (None, None) => (0.0, 0.0),
    }
}

/// Infinite-horizon value iteration with running cost `|r|`.
///
/// Marches `V ← max(|r|, V + Δt·Ĥ)` to a fixed point; the converged `V(x)` is
/// the smallest worst-case peak `|r|` the tracker can guarantee from `x`.
/// The returned function is shifted so the invariant set is `{V <= 0}`.
pub fn solve_invariant_set(
    params: &Subsystem2Params,
    grid: &Grid2,
    settings: &SolverSettings,
) -> Result<ValueFunction2D, ReachError> {
    params.validate()?;
    let g = *grid;
    let lf = HjScheme::new(g, params, settings.cfl, settings.order);
    let cost: Vec<f64> = (0..g.len()).map(|k| g.r_at(k / g.nv).abs()).collect();
    let mut values = cost.clone();
    let mut rate = vec![0.0; g.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let next = lf.advance(&values, &mut rate, |v, h, k| cost[k].max(v + h));
        residual = next
            .par_iter()
            .zip(values.par_iter())
            .map(|(a, b)| (a - b).abs())
            .reduce(|| 0.0, f64::max);
        values = next;
        iterations += 1;
        if residual < settings.tol {
            break;
        }
    }
    if residual >= settings.tol {
        return Err(ReachError::NotConverged { iterations, residual });
    }
    log::debug!(
        "invariant solve b_max={} converged in {iterations} sweeps (dt={:.2e})",
        params.b_max,
        lf.dt
    );

    let level = select_level(&g, &values, settings.level_slack_cells * g.dr()).ok_or_else(|| {
        let r = g.r_max.max(-g.r_min);
        ReachError::TouchesBoundary {
            r_lo: -r,
            r_hi: r,
            v_lo: g.v_min,
            v_hi: g.v_max,
        }
    })?;
    values.iter_mut().for_each(|v| *v -= level);
    let vf = ValueFunction2D {
        grid: g,
        values,
        kind: ValueKind::Invariant,
        params: *params,
        horizon: 0.0,
        converged: true,
        level,
        margin: settings.safety_margin_cells * g.dr(),
    };
    check_interior(&vf)?;
    Ok(vf)
}

/// Largest `|r|` reached by `{V <= c}`, interpolating crossings along `r`.
fn position_extent(g: &Grid2, values: &[f64], c: f64) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..g.nr {
        for j in 0..g.nv {
            let a = values[g.index(i, j)];
            if a <= c {
                m = m.max(g.r_at(i).abs());
            }
            if i + 1 < g.nr {
                let b = values[g.index(i + 1, j)];
                if (a <= c) != (b <= c) {
                    let t = (c - a) / (b - a);
                    m = m.max((g.r_at(i) + t * g.dr()).abs());
                }
            }
        }
    }
    m
}

/// Level of the smallest self-consistent sublevel set.
///
/// `V >= |r|` everywhere, so `{V <= c}` never reaches past `|r| = c`. The
/// plateau of the exact solution at the minimal level is smeared by the
/// scheme into a shallow bowl whose low sublevel sets are too thin; the first
/// level whose set does reach `|r| ≈ c` is where the bowl fills out.
fn select_level(g: &Grid2, values: &[f64], slack: f64) -> Option<f64> {
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let limit = g.r_max.min(-g.r_min);
    let step = 0.02 * g.dr();
    let mut c = vmin;
    while c < limit {
        if c - position_extent(g, values, c) <= slack {
            return Some(c);
        }
        c += step;
    }
    None
}

fn check_interior(vf: &ValueFunction2D) -> Result<(), ReachError> {
    let g = vf.grid;
    if vf.set_nodes().any(|(i, j)| g.is_boundary(i, j)) {
        let (r_lo, r_hi, v_lo, v_hi) = vf.set_extent().ok_or(ReachError::EmptySet)?;
        return Err(ReachError::TouchesBoundary { r_lo, r_hi, v_lo, v_hi });
    }
    if vf.set_nodes().next().is_none() {
        return Err(ReachError::EmptySet);
    }
    Ok(())
}

/// Backward reachable tube from `small`'s invariant set under `small`'s
/// (slower) planner dynamics, grown until it covers `large`'s invariant set.
///
/// The tube accumulates (`φ ← min(φ, φ + Δt·Ĥ)`), so values never increase
/// with horizon. The recorded horizon is the first time containment holds.
pub fn solve_ssb(
    small: &ValueFunction2D,
    large: &ValueFunction2D,
    settings: &SolverSettings,
) -> Result<ValueFunction2D, ReachError> {
    if small.grid != large.grid {
        return Err(ReachError::GridMismatch);
    }
    if !small.converged || !large.converged {
        return Err(ReachError::Unconverged);
    }
    if !small.set_within(large)? {
        return Err(ReachError::NotNested);
    }
    let g = small.grid;
    let params = small.params;
    let lf = HjScheme::new(g, &params, settings.cfl, settings.order);
    let mut values: Vec<f64> = small.values.iter().map(|v| v - small.margin).collect();
    let mut rate = vec![0.0; g.len()];
    let covered = |vals: &[f64]| {
        vals.par_iter()
            .zip(large.values.par_iter())
            .all(|(t, l)| *l > large.margin || *t <= 0.0)
    };
    let mut horizon = 0.0;
    while !covered(&values) {
        if horizon >= settings.horizon_cap {
            return Err(ReachError::HorizonExceeded {
                cap: settings.horizon_cap,
            });
        }
        values = lf.advance(&values, &mut rate, |v, h, _| v.min(v + h));
        horizon += lf.dt;
    }
    Ok(ValueFunction2D {
        grid: g,
        values,
        kind: ValueKind::Tube,
        params,
        horizon,
        converged: true,
        level: small.level + small.margin,
        margin: 0.0,
    })
}
