use std::path::PathBuf;

use metaplan::environment::Environment;
use metaplan::metaplanner::{grow, init_root, GrowConfig};
use metaplan::reachability::SafetyBound;
use metaplan::simulator::{export_trace, run, ControllerMode, DisturbanceMode, Scenario, SimConfig};
use metaplan::suite::{SuiteConfig, TrackingSuite};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Edges = Vec<(usize, Vec<(f64, [f64; 3])>)>;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn bound(b: &SafetyBound) -> [f64; 3] {
    [b.ex, b.ey, b.ez]
}

fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn config(path: Option<PathBuf>) -> PyResult<SuiteConfig> {
    match path {
        None => Ok(SuiteConfig::default()),
        Some(p) => metaplan::cli::RunConfig::load(&p).map(|c| c.suite).map_err(err),
    }
}

fn scenario(seed: u64, obstacles: Option<usize>, gap: Option<f64>) -> PyResult<Scenario> {
    match (obstacles, gap) {
        (Some(_), Some(_)) => Err(PyValueError::new_err("pass either obstacles or gap, not both")),
        (None, Some(g)) => Ok(Scenario::corridor(g)),
        (n, None) => Ok(Scenario::random_spheres(seed, n.unwrap_or(10), (0.5, 1.5))),
    }
}

/// Precomputed tracking tables for a family of planners.
#[pyclass(frozen)]
struct Suite {
    inner: TrackingSuite,
}

#[pymethods]
impl Suite {
    /// Loads tables from `artifacts`, solving and saving them first if they
    /// are missing or were built from a different config.
    #[staticmethod]
    #[pyo3(signature = (artifacts, config_path=None))]
    fn open(py: Python<'_>, artifacts: PathBuf, config_path: Option<PathBuf>) -> PyResult<Self> {
        let cfg = config(config_path)?;
        let (inner, _) = py
            .detach(|| TrackingSuite::load_or_solve(&artifacts, &cfg))
            .map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Per-planner `[ex, ey, ez]` tracking error bounds.
    fn tracking_bounds(&self) -> Vec<[f64; 3]> {
        self.inner.planners.iter().map(|p| bound(&p.teb)).collect()
    }

    /// `(from, to, [ex, ey, ez], horizon)` for every switch.
    fn switch_bounds(&self) -> Vec<(usize, usize, [f64; 3], f64)> {
        self.inner
            .switches
            .iter()
            .map(|s| (s.from, s.to, bound(&s.bound), s.horizon))
            .collect()
    }

    /// Plans in a fully known world. Returns `(planner, [(t, [x, y, z])])`
    /// per edge.
    #[pyo3(signature = (seed, obstacles=None, gap=None))]
    fn plan(&self, py: Python<'_>, seed: u64, obstacles: Option<usize>, gap: Option<f64>) -> PyResult<Edges> {
        let sc = scenario(seed, obstacles, gap)?;
        py.detach(|| {
            let suite = self.inner.planner_suite().map_err(err)?;
            let env = Environment::new(sc.workspace, sc.obstacles, sc.sensing_radius)
                .map_err(err)?
                .fully_known();
            let mut tree = init_root(sc.start, suite.slowest(), sc.goal, &suite, &env, seed).map_err(err)?;
            let plan = grow(&mut tree, &env, &suite, &GrowConfig::default())
                .ok_or_else(|| PyRuntimeError::new_err("no plan found within the budget"))?;
            Ok(plan
                .edges
                .iter()
                .map(|e| (e.planner, e.traj.waypoints.clone()))
                .collect())
        })
    }

    /// Runs one closed-loop simulation and returns its summary as a dict.
    /// With `out`, the trace CSVs are written there as `trace_{seed}`.
    #[pyo3(signature = (seed, disturbance="random", controller="optimal", obstacles=None, gap=None, out=None))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        disturbance: &str,
        controller: &str,
        obstacles: Option<usize>,
        gap: Option<f64>,
        out: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = SimConfig {
            seed,
            disturbance: disturbance.parse::<DisturbanceMode>().map_err(PyValueError::new_err)?,
            controller: controller.parse::<ControllerMode>().map_err(PyValueError::new_err)?,
            ..SimConfig::default()
        };
        let sc = scenario(seed, obstacles, gap)?;
        let summary = py.detach(|| -> PyResult<_> {
            let (trace, summary) = run(&sc, &self.inner, &cfg).map_err(err)?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(err)?;
                export_trace(&trace, dir, &format!("trace_{seed}")).map_err(err)?;
            }
            Ok(summary)
        })?;
        to_python(py, &summary)
    }
}

#[pymodule]
fn metaplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Suite>()?;
    Ok(())
}
