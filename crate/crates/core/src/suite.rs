//! Precomputed tables for a planner suite: per-planner invariant sets for
//! the shared x/y subsystem and the z subsystem, switching tubes for every
//! downgrade, and the bounds extracted from them.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::control::{ControlError, LqrController, SafetyController};
use crate::dynamics::{ControlLimits, DisturbanceBounds, DynamicsError, PlannerSpeed, Subsystem2Params};
use crate::geo_planner::PlannerSpec;
use crate::metaplanner::{PlanError, PlannerSuite, SwitchBound};
use crate::reachability::{
    extract_bound, extract_switching_bound, load_value_function, save_value_function, solve_invariant_set, solve_ssb,
    Grid2, ReachError, SafetyBound, SolverSettings, ValueFunction2D,
};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("invalid suite configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("{what}: {source}")]
    Reach {
        what: String,
        #[source]
        source: ReachError,
    },
    #[error("no precomputed artifacts in {0}; run `metaplan precompute` first")]
    Missing(PathBuf),
    #[error("artifacts in {dir} were computed for a different configuration (hash {found}, expected {expected}); rerun `metaplan precompute`")]
    Stale {
        dir: PathBuf,
        found: String,
        expected: String,
    },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything that determines the precomputed tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Planner speeds on the x and y axes, fastest first (m/s).
    pub xy_speeds: Vec<f64>,
    /// Planner speeds on the z axis, fastest first (m/s).
    pub z_speeds: Vec<f64>,
    pub disturbance: DisturbanceBounds,
    pub limits: ControlLimits,
    pub grid: Grid2,
    pub solver: SolverSettings,
    /// Supervisor band as a fraction of the deepest value.
    pub lambda: f64,
    pub lqr_kp: f64,
    pub lqr_kd: f64,
    /// Switches are validated over this multiple of the tube horizon.
    pub span_factor: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            xy_speeds: vec![1.0, 0.5, 0.25],
            z_speeds: vec![0.75, 0.5, 0.25],
            disturbance: DisturbanceBounds::default(),
            limits: ControlLimits::default(),
            grid: Grid2::default(),
            solver: SolverSettings::default(),
            lambda: 0.05,
            lqr_kp: 4.0,
            lqr_kd: 3.0,
            span_factor: 1.5,
        }
    }
}

impl SuiteConfig {
    /// Checks orderings and that every subsystem is solvable, before any work.
    pub fn validate(&self) -> Result<(), SuiteError> {
        let n = self.xy_speeds.len();
        if n == 0 || self.z_speeds.len() != n {
            return Err(SuiteError::Config(
                "xy_speeds and z_speeds must be non-empty and of equal length".into(),
            ));
        }
        self.limits.validate()?;
        for k in 0..n {
            PlannerSpeed::new(self.xy_speeds[k], self.xy_speeds[k], self.z_speeds[k])?;
            self.xy_params(k)?;
            self.z_params(k)?;
        }
        let decreasing = |s: &[f64]| s.windows(2).all(|w| w[0] > w[1]);
        if !decreasing(&self.xy_speeds) || !decreasing(&self.z_speeds) {
            return Err(SuiteError::Config("planner speeds must be strictly decreasing".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(SuiteError::Config(format!("lambda {} not in (0, 1)", self.lambda)));
        }
        if !(self.lqr_kp > 0.0 && self.lqr_kd > 0.0) {
            return Err(SuiteError::Config("LQR gains must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.xy_speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xy_speeds.is_empty()
    }

    pub fn speed(&self, k: usize) -> PlannerSpeed {
        PlannerSpeed {
            bx: self.xy_speeds[k],
            by: self.xy_speeds[k],
            bz: self.z_speeds[k],
        }
    }

    pub fn xy_params(&self, k: usize) -> Result<Subsystem2Params, DynamicsError> {
        Subsystem2Params::tilt_axis(
            self.limits.roll_max.min(self.limits.pitch_max),
            self.xy_speeds[k],
            self.disturbance,
        )
    }

    pub fn z_params(&self, k: usize) -> Result<Subsystem2Params, DynamicsError> {
        Subsystem2Params::thrust_axis(&self.limits, self.z_speeds[k], self.disturbance)
    }

    pub fn nominal(&self) -> LqrController {
        LqrController::uniform(self.lqr_kp, self.lqr_kd)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerTables {
    pub speed: PlannerSpeed,
    pub xy: ValueFunction2D,
    pub z: ValueFunction2D,
    pub teb: SafetyBound,
}

impl PlannerTables {
    /// Value function governing axis `a` (0, 1: x/y; 2: z).
    pub fn axis(&self, a: usize) -> &ValueFunction2D {
        if a < 2 {
            &self.xy
        } else {
            &self.z
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchTables {
    pub from: usize,
    pub to: usize,
    pub xy: ValueFunction2D,
    pub z: ValueFunction2D,
    /// Tube restricted to the faster planner's set.
    pub bound: SafetyBound,
    /// Unrestricted tube projection.
    pub raw_bound: SafetyBound,
    pub horizon: f64,
}

impl SwitchTables {
    pub fn axis(&self, a: usize) -> &ValueFunction2D {
        if a < 2 {
            &self.xy
        } else {
            &self.z
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSuite {
    pub config: SuiteConfig,
    pub planners: Vec<PlannerTables>,
    pub switches: Vec<SwitchTables>,
}

fn reach(what: impl Into<String>) -> impl FnOnce(ReachError) -> SuiteError {
    let what = what.into();
    move |source| SuiteError::Reach { what, source }
}

impl TrackingSuite {
    /// Solves every table. Independent solves run in parallel.
    pub fn solve(config: &SuiteConfig) -> Result<Self, SuiteError> {
        config.validate()?;
        let n = config.len();
        let s = &config.solver;
        let jobs: Vec<(usize, bool)> = (0..n).flat_map(|k| [(k, false), (k, true)]).collect();
        let solved: Vec<ValueFunction2D> = jobs
            .par_iter()
            .map(|&(k, z)| {
                let (p, name) = if z {
                    (config.z_params(k)?, "z")
                } else {
                    (config.xy_params(k)?, "xy")
                };
                solve_invariant_set(&p, &config.grid, s).map_err(reach(format!("planner {k} {name} invariant set")))
            })
            .collect::<Result<_, SuiteError>>()?;
        let mut planners = Vec::with_capacity(n);
        for k in 0..n {
            let xy = solved[2 * k].clone();
            let z = solved[2 * k + 1].clone();
            let exy = extract_bound(&xy).map_err(reach(format!("planner {k} xy bound")))?;
            let ez = extract_bound(&z).map_err(reach(format!("planner {k} z bound")))?;
            planners.push(PlannerTables {
                speed: config.speed(k),
                teb: SafetyBound::new(exy, exy, ez),
                xy,
                z,
            });
        }
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |k| (i, k))).collect();
        let switches = pairs
            .par_iter()
            .map(|&(i, k)| Self::solve_switch(&planners, i, k, s))
            .collect::<Result<_, SuiteError>>()?;
        Ok(Self {
            config: config.clone(),
            planners,
            switches,
        })
    }

    fn solve_switch(
        planners: &[PlannerTables],
        i: usize,
        k: usize,
        s: &SolverSettings,
    ) -> Result<SwitchTables, SuiteError> {
        let (large, small) = (&planners[i], &planners[k]);
        let what = |axis: &str| format!("switch {i} -> {k} {axis}");
        let xy = solve_ssb(&small.xy, &large.xy, s).map_err(reach(what("xy")))?;
        let z = solve_ssb(&small.z, &large.z, s).map_err(reach(what("z")))?;
        let bxy = extract_switching_bound(&xy, &large.xy).map_err(reach(what("xy")))?;
        let bz = extract_switching_bound(&z, &large.z).map_err(reach(what("z")))?;
        let rxy = extract_bound(&xy).map_err(reach(what("xy")))?;
        let rz = extract_bound(&z).map_err(reach(what("z")))?;
        Ok(SwitchTables {
            from: i,
            to: k,
            horizon: xy.horizon.max(z.horizon),
            bound: SafetyBound::new(bxy, bxy, bz),
            raw_bound: SafetyBound::new(rxy, rxy, rz),
            xy,
            z,
        })
    }

    pub fn len(&self) -> usize {
        self.planners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planners.is_empty()
    }

    pub fn switch(&self, from: usize, to: usize) -> &SwitchTables {
        self.switches
            .iter()
            .find(|s| s.from == from && s.to == to)
            .expect("switch tables exist for every downgrade")
    }

    /// Least-restrictive supervisor for planner `k` at control period `period`.
    pub fn controller(&self, k: usize, period: f64) -> Result<SafetyController, ControlError> {
        let p = &self.planners[k];
        SafetyController::new(
            [p.xy.clone(), p.xy.clone(), p.z.clone()],
            self.config.limits,
            self.config.lambda,
            self.config.nominal(),
            period,
        )
    }

    /// Geometric view used by the meta-planner.
    pub fn planner_suite(&self) -> Result<PlannerSuite, PlanError> {
        let n = self.len();
        let specs = self
            .planners
            .iter()
            .map(|p| PlannerSpec {
                speed: p.speed,
                teb: p.teb,
            })
            .collect();
        let mut table = vec![vec![None; n]; n];
        for s in &self.switches {
            table[s.from][s.to] = Some(SwitchBound {
                bound: s.bound,
                horizon: s.horizon,
            });
        }
        PlannerSuite::new(specs, table, self.config.span_factor)
    }

    /// Writes every table plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<Manifest, SuiteError> {
        fs::create_dir_all(dir)?;
        let mut manifest = Manifest {
            config_hash: self.config.hash(),
            config: self.config.clone(),
            planners: Vec::new(),
            switches: Vec::new(),
        };
        for (k, p) in self.planners.iter().enumerate() {
            let (fxy, fz) = (format!("teb_{k}_xy.vf"), format!("teb_{k}_z.vf"));
            save_value_function(&p.xy, &dir.join(&fxy)).map_err(reach(&fxy))?;
            save_value_function(&p.z, &dir.join(&fz)).map_err(reach(&fz))?;
            manifest.planners.push(PlannerEntry {
                speed: p.speed,
                teb: p.teb,
                files: [fxy, fz],
            });
        }
        for s in &self.switches {
            let (fxy, fz) = (
                format!("ssb_{}_{}_xy.vf", s.from, s.to),
                format!("ssb_{}_{}_z.vf", s.from, s.to),
            );
            save_value_function(&s.xy, &dir.join(&fxy)).map_err(reach(&fxy))?;
            save_value_function(&s.z, &dir.join(&fz)).map_err(reach(&fz))?;
            manifest.switches.push(SwitchEntry {
                from: s.from,
                to: s.to,
                bound: s.bound,
                raw_bound: s.raw_bound,
                horizon: s.horizon,
                files: [fxy, fz],
            });
        }
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Loads tables written by [`TrackingSuite::save`], refusing artifacts
    /// computed for a different configuration.
    pub fn load(dir: &Path, config: &SuiteConfig) -> Result<Self, SuiteError> {
        let manifest = Manifest::read(dir)?;
        let expected = config.hash();
        if manifest.config_hash != expected {
            return Err(SuiteError::Stale {
                dir: dir.to_path_buf(),
                found: manifest.config_hash,
                expected,
            });
        }
        let mut planners = Vec::new();
        for (k, e) in manifest.planners.iter().enumerate() {
            let xy =
                load_value_function(&dir.join(&e.files[0]), Some(&config.xy_params(k)?)).map_err(reach(&e.files[0]))?;
            let z =
                load_value_function(&dir.join(&e.files[1]), Some(&config.z_params(k)?)).map_err(reach(&e.files[1]))?;
            planners.push(PlannerTables {
                speed: e.speed,
                teb: e.teb,
                xy,
                z,
            });
        }
        let mut switches = Vec::new();
        for e in &manifest.switches {
            let xy = load_value_function(&dir.join(&e.files[0]), Some(&config.xy_params(e.to)?))
                .map_err(reach(&e.files[0]))?;
            let z = load_value_function(&dir.join(&e.files[1]), Some(&config.z_params(e.to)?))
                .map_err(reach(&e.files[1]))?;
            switches.push(SwitchTables {
                from: e.from,
                to: e.to,
                bound: e.bound,
                raw_bound: e.raw_bound,
                horizon: e.horizon,
                xy,
                z,
            });
        }
        Ok(Self {
            config: config.clone(),
            planners,
            switches,
        })
    }

    /// Loads cached artifacts when they match `config`, otherwise solves
    /// and writes them. Returns whether the cache was used.
    pub fn load_or_solve(dir: &Path, config: &SuiteConfig) -> Result<(Self, bool), SuiteError> {
        match Self::load(dir, config) {
            Ok(s) => Ok((s, true)),
            Err(SuiteError::Missing(_) | SuiteError::Stale { .. }) => {
                let s = Self::solve(config)?;
                s.save(dir)?;
                Ok((s, false))
            }
            Err(e) => Err(e),
        }
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerEntry {
    pub speed: PlannerSpeed,
    pub teb: SafetyBound,
    pub files: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEntry {
    pub from: usize,
    pub to: usize,
    pub bound: SafetyBound,
    pub raw_bound: SafetyBound,
    pub horizon: f64,
    pub files: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: SuiteConfig,
    pub planners: Vec<PlannerEntry>,
    pub switches: Vec<SwitchEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, SuiteError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(SuiteError::Missing(dir.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = SuiteConfig::default();
        ok.validate().unwrap();
        let mut c = ok.clone();
        c.xy_speeds = vec![0.5, 1.0, 0.25];
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.z_speeds.pop();
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.disturbance.da_max = 5.0;
        assert!(matches!(c.validate(), Err(SuiteError::Dynamics(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = SuiteConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.xy_speeds[0] = 1.1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_artifacts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            TrackingSuite::load(dir.path(), &SuiteConfig::default()),
            Err(SuiteError::Missing(_))
        ));
    }
}
