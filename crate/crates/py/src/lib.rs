//! Python bindings: floor plans, distance fields, single runs and sweeps.

use std::collections::BTreeSet;
use std::path::PathBuf;

use evacsim_core::engine::{self, World};
use evacsim_core::geometry::{self, Coord, ExitId};
use evacsim_core::scenario::{self, LoadError};
use evacsim_core::signage::{Mode, Policy};
use evacsim_core::sweep;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_err(e: LoadError) -> PyErr {
    match e {
        LoadError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// A walkable grid with numbered exits.
#[pyclass(name = "FloorPlan", module = "evacsim", frozen)]
struct PyFloorPlan {
    world: World,
}

#[pymethods]
impl PyFloorPlan {
    /// Parses the text map format (`#` wall, `.` floor, `1`-`9`/`A`-`E` exits).
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let plan = geometry::parse_map(text).map_err(value_err)?;
        Ok(Self { world: World::new(plan) })
    }

    /// The shipped 4000-cell mall.
    #[staticmethod]
    fn default() -> Self {
        Self {
            world: World::new(evacsim_core::default_plan()),
        }
    }

    #[staticmethod]
    fn synthetic(seed: u64) -> Self {
        Self {
            world: World::new(evacsim_core::generate_synthetic_mall(seed)),
        }
    }

    /// `default`, `synthetic:<seed>` or a path to a map file.
    #[staticmethod]
    fn load(source: &str) -> PyResult<Self> {
        Ok(Self {
            world: World::new(scenario::load_map(source).map_err(load_err)?),
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.world.plan.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.world.plan.height()
    }

    #[getter]
    fn walkable_count(&self) -> usize {
        self.world.plan.walkable_count()
    }

    fn exit_ids(&self) -> Vec<u32> {
        self.world.plan.exit_ids().into_iter().map(u32::from).collect()
    }

    fn exit_cell(&self, exit_id: ExitId) -> Option<(usize, usize)> {
        self.world.plan.exit_cell(exit_id).map(|c| (c.x, c.y))
    }

    fn is_walkable(&self, x: usize, y: usize) -> bool {
        self.world.plan.contains(Coord::new(x, y)) && self.world.plan.is_walkable(Coord::new(x, y))
    }

    fn render(&self) -> String {
        self.world.plan.render()
    }

    /// Hop distances to `exit_id` as rows of ints, `None` where unreachable.
    fn distance_field(&self, exit_id: ExitId) -> PyResult<Vec<Vec<Option<u32>>>> {
        let field = self.world.fields.get(exit_id).ok_or_else(|| value_err(format!("unknown exit {exit_id}")))?;
        let plan = &self.world.plan;
        Ok((0..plan.height())
            .map(|y| (0..plan.width()).map(|x| field.get(Coord::new(x, y))).collect())
            .collect())
    }

    #[pyo3(signature = (x, y, blocked = Vec::new()))]
    fn nearest_exit(&self, x: usize, y: usize, blocked: Vec<ExitId>) -> PyResult<ExitId> {
        let c = Coord::new(x, y);
        if !self.world.plan.contains(c) || !self.world.plan.is_walkable(c) {
            return Err(value_err(format!("({x}, {y}) is not a walkable cell")));
        }
        let blocked: BTreeSet<ExitId> = blocked.into_iter().collect();
        self.world.fields.nearest_exit(c, &blocked).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FloorPlan({}x{}, {} walkable, exits {:?})",
            self.width(),
            self.height(),
            self.walkable_count(),
            self.exit_ids()
        )
    }
}

/// Run parameters. Keyword arguments mirror the config-file keys.
#[pyclass(name = "SimConfig", module = "evacsim", skip_from_py_object)]
#[derive(Clone)]
struct PySimConfig {
    inner: engine::SimConfig,
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (
        n = 4000, p = engine::DEFAULT_P, s = engine::DEFAULT_S, mode = "default", policy = "p1",
        theta = None, delta = None, window = None, seed = 0, max_steps = engine::DEFAULT_MAX_STEPS,
        cell_capacity = engine::DEFAULT_CELL_CAPACITY, pa_step = 0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        p: f64,
        s: usize,
        mode: &str,
        policy: &str,
        theta: Option<f64>,
        delta: Option<f64>,
        window: Option<usize>,
        seed: u64,
        max_steps: usize,
        cell_capacity: u32,
        pa_step: usize,
    ) -> PyResult<Self> {
        let mut c = engine::SimConfig {
            n,
            p,
            s,
            seed,
            max_steps,
            cell_capacity,
            pa_step,
            ..Default::default()
        };
        c.controller.mode = mode.parse::<Mode>().map_err(value_err)?;
        c.controller.policy = policy.parse::<Policy>().map_err(value_err)?;
        if let Some(v) = theta {
            c.controller.theta = v;
        }
        if let Some(v) = delta {
            c.controller.delta = v;
        }
        if let Some(v) = window {
            c.controller.window = v;
        }
        c.validate().map_err(value_err)?;
        Ok(Self { inner: c })
    }

    /// Reads a `kind = run` config file's text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let s = scenario::parse_scenario(text).map_err(value_err)?;
        Ok(Self { inner: s.config })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }
    #[getter]
    fn s(&self) -> usize {
        self.inner.s
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }
    #[getter]
    fn mode(&self) -> String {
        self.inner.controller.mode.to_string()
    }
    #[getter]
    fn policy(&self) -> String {
        self.inner.controller.policy.to_string()
    }
    #[getter]
    fn theta(&self) -> f64 {
        self.inner.controller.theta
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.controller.delta
    }
    #[getter]
    fn window(&self) -> usize {
        self.inner.controller.window
    }
    #[getter]
    fn max_steps(&self) -> usize {
        self.inner.max_steps
    }

    /// The config in file syntax.
    fn render(&self) -> String {
        scenario::render_config(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("SimConfig({})", sweep::config_id(&self.inner))
    }
}

/// Per-step evacuation counts and the sign-change log of one run.
#[pyclass(name = "Metrics", module = "evacsim", frozen)]
struct PyMetrics {
    inner: engine::MetricsSeries,
}

#[pymethods]
impl PyMetrics {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn capped(&self) -> bool {
        self.inner.capped
    }

    /// `(step, evacuated)` pairs starting at step 0.
    #[getter]
    fn records(&self) -> Vec<(usize, usize)> {
        self.inner.records.iter().map(|r| (r.step, r.evacuated)).collect()
    }

    fn rates(&self) -> Vec<f64> {
        self.inner.rates()
    }

    fn evacuation_rate(&self, t: usize) -> f64 {
        self.inner.evacuation_rate(t)
    }

    fn time_to(&self, fraction: f64) -> Option<usize> {
        self.inner.time_to(fraction)
    }

    fn final_step(&self) -> usize {
        self.inner.final_step()
    }

    fn final_rate(&self) -> f64 {
        self.inner.final_rate()
    }

    /// `(step, sign_id, old_exit, new_exit, density)`; `None` is inactive.
    fn sign_changes(&self) -> Vec<(usize, usize, Option<ExitId>, Option<ExitId>, f64)> {
        self.inner
            .sign_changes
            .iter()
            .map(|c| (c.step, c.sign_id, c.old_exit, c.new_exit, c.density))
            .collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn sign_log_csv(&self) -> String {
        self.inner.sign_log_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "Metrics(n={}, steps={}, final_rate={:.4}, capped={})",
            self.inner.n,
            self.inner.final_step(),
            self.inner.final_rate(),
            self.inner.capped
        )
    }
}

fn layout(signs: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<Coord>> {
    match signs {
        None => scenario::load_layout("default").map_err(load_err),
        Some(obj) => {
            if let Ok(source) = obj.extract::<String>() {
                scenario::load_layout(&source).map_err(load_err)
            } else {
                let cells: Vec<(usize, usize)> = obj.extract()?;
                Ok(cells.into_iter().map(|(x, y)| Coord::new(x, y)).collect())
            }
        }
    }
}

/// A simulation that can be advanced one step at a time.
#[pyclass(name = "Simulation", module = "evacsim", unsendable)]
struct PySimulation {
    inner: Option<engine::Simulation>,
}

impl PySimulation {
    fn sim(&self) -> PyResult<&engine::Simulation> {
        self.inner.as_ref().ok_or_else(|| value_err("simulation already finished"))
    }
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (config, plan = None, signs = None))]
    fn new(config: &PySimConfig, plan: Option<&PyFloorPlan>, signs: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let world = match plan {
            Some(p) => p.world.clone(),
            None => World::new(evacsim_core::default_plan()),
        };
        let sim = engine::Simulation::new(config.inner.clone(), world, &layout(signs)?).map_err(value_err)?;
        Ok(Self { inner: Some(sim) })
    }

    fn step(&mut self) -> PyResult<()> {
        let sim = self.inner.as_mut().ok_or_else(|| value_err("simulation already finished"))?;
        sim.step().map_err(value_err)
    }

    #[getter]
    fn step_index(&self) -> PyResult<usize> {
        Ok(self.sim()?.step_index())
    }

    #[getter]
    fn remaining(&self) -> PyResult<usize> {
        Ok(self.sim()?.remaining())
    }

    fn is_finished(&self) -> PyResult<bool> {
        Ok(self.sim()?.is_finished())
    }

    /// Cells of agents still inside.
    fn positions(&self) -> PyResult<Vec<(usize, usize)>> {
        Ok(self
            .sim()?
            .agents()
            .iter()
            .filter(|a| !a.is_evacuated())
            .map(|a| (a.pos.x, a.pos.y))
            .collect())
    }

    /// Current sign displays in id order; `None` is inactive.
    fn displays(&self) -> PyResult<Vec<Option<ExitId>>> {
        Ok(self.sim()?.signs().iter().map(|s| s.displayed_exit).collect())
    }

    /// Runs to completion and returns the metrics; the object is spent.
    fn finish(&mut self, py: Python<'_>) -> PyResult<PyMetrics> {
        let sim = self.inner.take().ok_or_else(|| value_err("simulation already finished"))?;
        let inner = py.detach(|| sim.run_to_end()).map_err(value_err)?;
        Ok(PyMetrics { inner })
    }
}

/// Runs one configuration to the end.
#[pyfunction]
#[pyo3(signature = (config, plan = None, signs = None))]
fn run(py: Python<'_>, config: &PySimConfig, plan: Option<&PyFloorPlan>, signs: Option<&Bound<'_, PyAny>>) -> PyResult<PyMetrics> {
    let world = match plan {
        Some(p) => p.world.clone(),
        None => World::new(evacsim_core::default_plan()),
    };
    let layout = layout(signs)?;
    let config = config.inner.clone();
    let inner = py.detach(move || engine::run(&config, &world, &layout)).map_err(value_err)?;
    Ok(PyMetrics { inner })
}

/// Runs a `kind = sweep` spec into `out` and returns the aggregate CSV.
#[pyfunction]
#[pyo3(signature = (spec, out, jobs = None))]
fn run_sweep(py: Python<'_>, spec: &str, out: PathBuf, jobs: Option<usize>) -> PyResult<String> {
    let spec = scenario::parse_sweep_spec(spec).map_err(value_err)?;
    let result = py.detach(|| sweep::run_sweep(&spec, &out, jobs)).map_err(|e| {
        if e.is_io() {
            PyIOError::new_err(e.to_string())
        } else {
            value_err(e)
        }
    })?;
    Ok(result.to_csv())
}

/// BFS hop distances to `exit_id` over a map given as text.
#[pyfunction]
fn distance_field(map: &str, exit_id: ExitId) -> PyResult<Vec<Vec<Option<u32>>>> {
    PyFloorPlan::parse(map)?.distance_field(exit_id)
}

#[pyfunction]
#[pyo3(signature = (map, x, y, blocked = Vec::new()))]
fn nearest_exit(map: &str, x: usize, y: usize, blocked: Vec<ExitId>) -> PyResult<ExitId> {
    PyFloorPlan::parse(map)?.nearest_exit(x, y, blocked)
}

#[pymodule]
fn evacsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFloorPlan>()?;
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyMetrics>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(distance_field, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_exit, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

