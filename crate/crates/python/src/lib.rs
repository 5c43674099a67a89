//! Python bindings for navstack.
//!
//! Structured results (move results, episode logs, reports) cross the
//! boundary as plain dicts built from their JSON form.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use navstack::camera_api::DepthScan;
use navstack::config::FlatConfig;
use navstack::discrete_move::{self, ActionKind, DiscreteAction};
use navstack::eval::{self, EpisodeSpec, ReportOptions, SuiteConfig};
use navstack::geometry::{Point, Pose2D};
use navstack::planner::{self, Cell, OccupancyGrid};
use navstack::policies::{make_policy, VlvConfig};
use navstack::sim_world::{self, Category, WorldMap};
use navstack::stack::{self, StackConfig};
use navstack::vsn_core::{self, VsnConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn parse_category(name: &str) -> PyResult<Category> {
    name.parse().map_err(value_err)
}

fn parse_action(kind: &str, magnitude: Option<f64>) -> PyResult<DiscreteAction> {
    let kind: ActionKind = kind.parse().map_err(value_err)?;
    let mut a = DiscreteAction::standard(kind);
    if let Some(m) = magnitude {
        a.magnitude = m;
    }
    Ok(a)
}

/// Stack, navigation-loop and VLV settings from an optional config file.
fn load_settings(path: Option<PathBuf>) -> PyResult<(StackConfig, VsnConfig, VlvConfig)> {
    let mut stack = StackConfig::default();
    let mut vsn = VsnConfig::default();
    let mut vlv = VlvConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(&p).map_err(|e| PyOSError::new_err(format!("{}: {e}", p.display())))?;
        let flat = FlatConfig::parse(&text).map_err(value_err)?;
        stack.apply(&flat).map_err(value_err)?;
        vsn = VsnConfig::from_config(&flat, None).map_err(value_err)?;
        vlv.apply(&flat).map_err(value_err)?;
    }
    Ok((stack, vsn, vlv))
}

/// An immutable floor plan with objects and start poses.
#[pyclass(frozen, module = "pynavstack")]
struct World {
    inner: Arc<WorldMap>,
}

#[pymethods]
impl World {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let w = sim_world::load_world(&path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        Ok(Self { inner: Arc::new(w) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let w = WorldMap::from_json_str(text).map_err(value_err)?;
        Ok(Self { inner: Arc::new(w) })
    }

    /// The map shipped with the library.
    #[staticmethod]
    fn apartment() -> Self {
        Self {
            inner: Arc::new(sim_world::bundled_apartment()),
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn digest(&self) -> String {
        self.inner.digest().to_string()
    }

    #[getter]
    fn robot_radius(&self) -> f64 {
        self.inner.robot_radius
    }

    #[getter]
    fn starts(&self) -> Vec<(f64, f64, f64)> {
        self.inner.starts.iter().map(|p| (p.x, p.y, p.heading)).collect()
    }

    fn categories(&self) -> Vec<String> {
        self.inner.categories().iter().map(|c| c.to_string()).collect()
    }

    fn objects(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.objects)
    }

    fn collides(&self, x: f64, y: f64) -> bool {
        sim_world::check_collision(&self.inner, &Pose2D::new(x, y, 0.0), self.inner.robot_radius)
    }

    fn distance_to(&self, x: f64, y: f64, category: &str) -> PyResult<f64> {
        sim_world::distance_to_object(&self.inner, &Pose2D::new(x, y, 0.0), parse_category(category)?).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "World(name={:?}, objects={}, starts={})",
            self.inner.name,
            self.inner.objects.len(),
            self.inner.starts.len()
        )
    }
}

/// A running simulator with the full node graph wired on the bus.
#[pyclass(unsendable, module = "pynavstack")]
struct Stack {
    inner: stack::Stack,
}

#[pymethods]
impl Stack {
    /// Launch at a 1-based start index or an explicit `(x, y, heading)` pose.
    #[new]
    #[pyo3(signature = (world, start=1, pose=None, config=None))]
    fn new(world: &World, start: usize, pose: Option<(f64, f64, f64)>, config: Option<PathBuf>) -> PyResult<Self> {
        let (cfg, _, _) = load_settings(config)?;
        let start_pose = match pose {
            Some((x, y, h)) => Pose2D::new(x, y, h),
            None => *start
                .checked_sub(1)
                .and_then(|i| world.inner.starts.get(i))
                .ok_or_else(|| PyValueError::new_err(format!("start {start} out of range")))?,
        };
        let inner = stack::Stack::launch(Arc::clone(&world.inner), start_pose, &cfg).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Run one discrete action through the motion controller.
    #[pyo3(signature = (kind, magnitude=None))]
    fn execute(&self, py: Python<'_>, kind: &str, magnitude: Option<f64>) -> PyResult<Py<PyAny>> {
        let action = parse_action(kind, magnitude)?;
        let result = self.inner.controller().execute(action);
        to_py(py, &result)
    }

    /// Ground-truth `(x, y, heading)`.
    fn pose(&self) -> (f64, f64, f64) {
        let p = self.inner.truth_pose();
        (p.x, p.y, p.heading)
    }

    /// Simulated seconds since launch.
    fn now(&self) -> f64 {
        self.inner.now()
    }

    /// Wired edges as `(node, kind, name)` triples.
    fn topology(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.topology())
    }
}

#[pyfunction]
fn turn_error(target: f64, current: f64) -> f64 {
    discrete_move::turn_error(target, current)
}

#[pyfunction]
fn straight_error(d: f64, x: f64, y: f64, x_init: f64, y_init: f64) -> f64 {
    discrete_move::straight_error(d, x, y, x_init, y_init)
}

/// Per-ray median of depth frames; zeros are dropouts.
#[pyfunction]
#[pyo3(signature = (frames, fov=90.0, max_range=5.0))]
fn median_filter(frames: Vec<Vec<f64>>, fov: f64, max_range: f64) -> PyResult<Vec<f64>> {
    let scans: Vec<DepthScan> = frames
        .into_iter()
        .map(|ranges| DepthScan {
            ranges,
            fov,
            max_range,
            stamp: 0.0,
            pose_hint: Pose2D::default(),
        })
        .collect();
    Ok(vsn_core::median_filter(&scans).map_err(value_err)?.ranges)
}

fn grid_from_rows(rows: &[String], resolution: f64) -> PyResult<OccupancyGrid> {
    let h = rows.len();
    let w = rows.first().map_or(0, |r| r.chars().count());
    let mut g = OccupancyGrid::new(w, h, resolution, Point::new(0.0, 0.0)).map_err(value_err)?;
    // first row is the top of the map
    for (i, row) in rows.iter().enumerate() {
        if row.chars().count() != w {
            return Err(PyValueError::new_err(format!("row {i} has a different width")));
        }
        let r = (h - 1 - i) as i64;
        for (c, ch) in row.chars().enumerate() {
            let cell = match ch {
                '#' => Cell::Occupied,
                '.' => Cell::Free,
                '?' => Cell::Unknown,
                other => return Err(PyValueError::new_err(format!("unknown cell {other:?}"))),
            };
            g.set(c as i64, r, cell);
        }
    }
    Ok(g)
}

/// Arrival-time field over a text grid (`#` occupied, `.` free, `?`
/// unknown; first row on top). Returns rows in the same orientation with
/// `inf` for unreachable cells.
#[pyfunction]
#[pyo3(signature = (rows, goal, resolution=0.05, inflation=0.0))]
fn fast_marching(rows: Vec<String>, goal: (f64, f64), resolution: f64, inflation: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = grid_from_rows(&rows, resolution)?;
    let f = planner::fast_marching(&g, Point::new(goal.0, goal.1), inflation).map_err(value_err)?;
    Ok((0..f.height as i64)
        .rev()
        .map(|r| (0..f.width as i64).map(|c| f.value(c, r)).collect())
        .collect())
}

type Plan = (Vec<(f64, f64)>, Vec<String>);

/// Waypoints from `start` down the field to `goal`, plus the discrete
/// actions that follow them from heading `heading`.
#[pyfunction]
#[pyo3(signature = (rows, start, goal, heading=0.0, resolution=0.05, inflation=0.0))]
fn plan(
    rows: Vec<String>,
    start: (f64, f64),
    goal: (f64, f64),
    heading: f64,
    resolution: f64,
    inflation: f64,
) -> PyResult<Plan> {
    let g = grid_from_rows(&rows, resolution)?;
    let f = planner::fast_marching(&g, Point::new(goal.0, goal.1), inflation).map_err(value_err)?;
    let path = planner::extract_path(&f, Point::new(start.0, start.1)).map_err(value_err)?;
    let actions = planner::path_to_actions(&path, Pose2D::new(start.0, start.1, heading)).map_err(value_err)?;
    Ok((
        path.iter().map(|p| (p.x, p.y)).collect(),
        actions.iter().map(|a| a.kind.to_string()).collect(),
    ))
}

/// One episode; returns the episode log as a dict.
#[pyfunction]
#[pyo3(signature = (world, policy, target, start=1, seed=0, config=None, script=None))]
#[allow(clippy::too_many_arguments)]
fn run_episode(
    py: Python<'_>,
    world: &World,
    policy: &str,
    target: &str,
    start: usize,
    seed: u64,
    config: Option<PathBuf>,
    script: Option<Vec<String>>,
) -> PyResult<Py<PyAny>> {
    let (stack_cfg, vsn, vlv) = load_settings(config)?;
    let target = parse_category(target)?;
    let mut p = make_policy(policy, vlv, script).map_err(value_err)?;
    let spec = EpisodeSpec {
        id: format!("{policy}-{target}-s{start:02}"),
        target,
        start_index: start,
        seed,
    };
    let w = Arc::clone(&world.inner);
    let log = py
        .detach(move || eval::run_single(&w, &spec, p.as_mut(), &stack_cfg, &vsn))
        .map_err(value_err)?;
    let d = to_py(py, &log)?;
    let success = eval::success(&log, &world.inner);
    d.bind(py).cast::<PyDict>()?.set_item("success", success)?;
    Ok(d)
}

/// Run a suite and return the success report as a dict; with `out_dir` the
/// episode logs, plots and `report.json` are written there too.
#[pyfunction]
#[pyo3(signature = (world, policy, categories=None, seed=0, starts=None, parallel=1, config=None, out_dir=None, script=None))]
#[allow(clippy::too_many_arguments)]
fn run_suite(
    py: Python<'_>,
    world: &World,
    policy: &str,
    categories: Option<Vec<String>>,
    seed: u64,
    starts: Option<Vec<usize>>,
    parallel: usize,
    config: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    script: Option<Vec<String>>,
) -> PyResult<Py<PyAny>> {
    let (stack_cfg, vsn, vlv) = load_settings(config)?;
    let categories = match categories {
        Some(names) => names.iter().map(|n| parse_category(n)).collect::<PyResult<Vec<_>>>()?,
        None => world.inner.categories(),
    };
    let mut cfg = SuiteConfig::new(policy, categories, seed);
    cfg.starts = starts.unwrap_or_default();
    cfg.parallel = parallel.max(1);
    cfg.stack = stack_cfg;
    cfg.vsn = vsn;
    cfg.vlv = vlv;
    cfg.script = script;
    let w = Arc::clone(&world.inner);
    let (report, logs) = py.detach(move || eval::run_suite(&w, &cfg)).map_err(value_err)?;
    if let Some(dir) = out_dir {
        let opts = ReportOptions::default();
        eval::write_report(&report, &logs, &world.inner, &dir, opts).map_err(|e| PyOSError::new_err(e.to_string()))?;
    }
    to_py(py, &report)
}

/// Aggregate `(category, success, actions)` rows into per-category and
/// overall rates.
#[pyfunction]
fn aggregate(py: Python<'_>, outcomes: Vec<(String, bool, usize)>) -> PyResult<Py<PyAny>> {
    let rows = outcomes
        .iter()
        .map(|(c, s, a)| Ok((parse_category(c)?, *s, *a)))
        .collect::<PyResult<Vec<_>>>()?;
    let (cats, overall) = eval::aggregate(&rows).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("categories", to_py(py, &cats)?)?;
    out.set_item("overall", to_py(py, &overall)?)?;
    Ok(out.into_any().unbind())
}

#[pymodule]
fn pynavstack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<World>()?;
    m.add_class::<Stack>()?;
    m.add_function(wrap_pyfunction!(turn_error, m)?)?;
    m.add_function(wrap_pyfunction!(straight_error, m)?)?;
    m.add_function(wrap_pyfunction!(median_filter, m)?)?;
    m.add_function(wrap_pyfunction!(fast_marching, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add("CATEGORIES", Category::ALL.iter().map(|c| c.to_string()).collect::<Vec<_>>())?;
    Ok(())
}
