//! Python bindings. Matrices cross the boundary as nested lists, structured
//! results as plain dicts, configs as dicts keyed like the TOML fields.

use gadiff_core::central::{mahalanobis as core_mahalanobis, solve_central};
use gadiff_core::diffusion::{line_search_step_size, run as core_run, Network, RunConfig};
use gadiff_core::graph::{connected_knn_edges, contraction_factor, MixingMatrix, MixingSchedule, TimeVaryingGraph};
use gadiff_core::harness::{self, ExperimentConfig};
use gadiff_core::learner::{schedule_from_text, schedule_to_text, train as core_train, LearnerConfig};
use gadiff_core::linalg::{Matrix, Vector};
use gadiff_core::scenario::{generate_scenario, Scenario, ScenarioConfig};
use gadiff_core::theory::{check_lemmas, compute_constants, spectral_radius_h, stepsize_admissible, BlockSystem};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(gadiff, GadiffError, PyException);

fn err(e: gadiff_core::Error) -> PyErr {
    GadiffError::new_err(e.to_string())
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(GadiffError::new_err("ragged matrix rows"));
    }
    Ok(Matrix::from_fn(n, c, |i, j| rows[i][j]))
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Serialize through JSON into native Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| GadiffError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Build a serde config from an optional dict; missing keys keep their defaults.
fn from_py<T: DeserializeOwned + Default>(py: Python<'_>, value: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(d) = value else {
        return Ok(T::default());
    };
    let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| GadiffError::new_err(format!("bad config: {e}")))
}

#[pyclass(name = "Graph", frozen, module = "gadiff")]
struct PyGraph(TimeVaryingGraph);

#[pymethods]
impl PyGraph {
    #[new]
    fn new(nodes: usize, snapshots: Vec<Vec<(usize, usize)>>) -> PyResult<Self> {
        TimeVaryingGraph::new(nodes, snapshots).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (nodes, edges, window=1))]
    fn repeated(nodes: usize, edges: Vec<(usize, usize)>, window: usize) -> PyResult<Self> {
        TimeVaryingGraph::repeated(nodes, edges, window).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (nodes, window=1))]
    fn ring(nodes: usize, window: usize) -> PyResult<Self> {
        TimeVaryingGraph::ring(nodes, window).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (nodes, window=1))]
    fn path(nodes: usize, window: usize) -> PyResult<Self> {
        TimeVaryingGraph::path(nodes, window).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (nodes, window=1))]
    fn complete(nodes: usize, window: usize) -> PyResult<Self> {
        TimeVaryingGraph::complete(nodes, window).map(Self).map_err(err)
    }

    /// Connected k-nearest-neighbour graph over 3-D points, repeated `window` times.
    #[staticmethod]
    #[pyo3(signature = (points, k, window=1))]
    fn knn(points: Vec<[f64; 3]>, k: usize, window: usize) -> PyResult<Self> {
        TimeVaryingGraph::repeated(points.len(), connected_knn_edges(&points, k), window)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        TimeVaryingGraph::parse_edge_list(text, "<python>").map(Self).map_err(err)
    }

    fn to_text(&self) -> String {
        self.0.to_edge_list(&[])
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.0.node_count()
    }

    #[getter]
    fn window(&self) -> usize {
        self.0.window()
    }

    fn snapshot(&self, layer: usize) -> PyResult<Vec<(usize, usize)>> {
        if layer >= self.0.window() {
            return Err(GadiffError::new_err(format!("layer {layer} out of range")));
        }
        Ok(self.0.snapshot(layer).to_vec())
    }

    fn union_edges(&self) -> Vec<(usize, usize)> {
        self.0.union_edges()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.stats())
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, window={})", self.0.node_count(), self.0.window())
    }
}

#[pyclass(name = "Schedule", frozen, module = "gadiff")]
struct PySchedule(MixingSchedule);

#[pymethods]
impl PySchedule {
    /// Layers are checked to be doubly stochastic within `tol`.
    #[new]
    #[pyo3(signature = (layers, lazy=false, tol=1e-10))]
    fn new(layers: Vec<Vec<Vec<f64>>>, lazy: bool, tol: f64) -> PyResult<Self> {
        let mats = layers
            .iter()
            .map(|l| MixingMatrix::new(to_matrix(l)?, tol).map_err(err))
            .collect::<PyResult<Vec<_>>>()?;
        MixingSchedule::new(mats, lazy).map(Self).map_err(err)
    }

    /// One-layer lazy Metropolis schedule on the union graph.
    #[staticmethod]
    fn metropolis(graph: &PyGraph) -> PyResult<Self> {
        harness::metropolis_schedule(&graph.0).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        schedule_from_text(text, "<python>").map(|(s, _)| Self(s)).map_err(err)
    }

    fn to_text(&self) -> PyResult<String> {
        let eps = contraction_factor(&self.0).map_err(err)?;
        Ok(schedule_to_text(&self.0, eps, &[]))
    }

    #[getter]
    fn window(&self) -> usize {
        self.0.window()
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.0.size()
    }

    #[getter]
    fn lazy(&self) -> bool {
        self.0.is_lazy()
    }

    fn layers(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.matrices().iter().map(|m| rows(m.weights())).collect()
    }

    /// Layer as applied, i.e. (I + W)/2 when lazy.
    fn effective(&self, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        if layer >= self.0.window() {
            return Err(GadiffError::new_err(format!("layer {layer} out of range")));
        }
        Ok(rows(self.0.effective(layer).weights()))
    }

    fn contraction_factor(&self) -> PyResult<f64> {
        contraction_factor(&self.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Schedule(nodes={}, window={}, lazy={})",
            self.0.size(),
            self.0.window(),
            self.0.is_lazy()
        )
    }
}

#[pyclass(name = "Scenario", frozen, module = "gadiff")]
struct PyScenario(Scenario);

impl PyScenario {
    fn network(&self, epoch: usize) -> PyResult<Network> {
        let e = self.0.epoch(epoch).map_err(err)?;
        Network::from_systems(&e.systems).map_err(err)
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (config=None))]
    fn generate(py: Python<'_>, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg: ScenarioConfig = from_py(py, config)?;
        generate_scenario(&cfg).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Scenario::from_json(text, "<python>").map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn stations(&self) -> usize {
        self.0.stations.len()
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.0.epochs.len()
    }

    #[getter]
    fn global_dim(&self) -> usize {
        self.0.global_dim()
    }

    fn station_positions(&self) -> Vec<[f64; 3]> {
        self.0.stations.iter().map(|s| s.ecef).collect()
    }

    fn z_true(&self) -> Vec<f64> {
        vec_of(&self.0.z_true)
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.config)
    }

    /// Smoothness constants of the reduced objectives at `epoch`.
    #[pyo3(signature = (epoch=0))]
    fn smoothness(&self, epoch: usize) -> PyResult<(f64, f64)> {
        let s = self.network(epoch)?.smoothness();
        Ok((s.l, s.m))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(stations={}, satellites={}, epochs={})",
            self.0.stations.len(),
            self.0.satellites.len(),
            self.0.epochs.len()
        )
    }
}

/// Train a schedule on `graph`; returns (schedule, trace dict).
#[pyfunction]
#[pyo3(signature = (graph, config=None))]
fn train<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<(PySchedule, Bound<'py, PyDict>)> {
    let cfg: LearnerConfig = from_py(py, config)?;
    let (schedule, trace) = py.detach(|| core_train(&graph.0, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("losses", trace.losses)?;
    d.set_item("final_epsilon", trace.final_epsilon)?;
    d.set_item("clamped_entries", trace.clamped_entries)?;
    d.set_item("max_sinkhorn_residual", trace.max_sinkhorn_residual)?;
    d.set_item("final_sinkhorn_residual", trace.final_sinkhorn_residual)?;
    Ok((PySchedule(schedule), d))
}

/// Centralized estimate for one epoch: z_hat, x_hat per station, precision.
#[pyfunction]
#[pyo3(signature = (scenario, epoch=0))]
fn central<'py>(py: Python<'py>, scenario: &PyScenario, epoch: usize) -> PyResult<Bound<'py, PyDict>> {
    let e = scenario.0.epoch(epoch).map_err(err)?;
    let c = solve_central(&e.systems).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("z_hat", vec_of(&c.z_hat))?;
    d.set_item("x_hat", c.x_hat.iter().map(vec_of).collect::<Vec<_>>())?;
    d.set_item("precision", rows(&c.precision))?;
    Ok(d)
}

#[pyfunction]
fn mahalanobis(z_est: Vec<f64>, z_truth: Vec<f64>, precision: Vec<Vec<f64>>) -> PyResult<f64> {
    core_mahalanobis(&Vector::from_vec(z_est), &Vector::from_vec(z_truth), &to_matrix(&precision)?).map_err(err)
}

/// Largest non-divergent step size from 2/L down by `shrink`.
#[pyfunction]
#[pyo3(signature = (scenario, schedule, epoch=0, shrink=0.5, candidates=10, trial_iters=2000))]
fn line_search(
    py: Python<'_>,
    scenario: &PyScenario,
    schedule: &PySchedule,
    epoch: usize,
    shrink: f64,
    candidates: usize,
    trial_iters: usize,
) -> PyResult<f64> {
    let net = scenario.network(epoch)?;
    let start = 2.0 / net.smoothness().l;
    py.detach(|| line_search_step_size(&net, &schedule.0, start, shrink, candidates, trial_iters))
        .map_err(err)
}

/// Run the diffusion on one epoch from a cold start. Without `step_size`
/// the default line search picks one.
#[pyfunction]
#[pyo3(signature = (scenario, schedule, epoch=0, step_size=None, max_iters=5000, log_every=1))]
fn run<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    schedule: &PySchedule,
    epoch: usize,
    step_size: Option<f64>,
    max_iters: usize,
    log_every: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let net = scenario.network(epoch)?;
    let mu = match step_size {
        Some(mu) => mu,
        None => line_search(py, scenario, schedule, epoch, 0.5, 10, 2000)?,
    };
    let cfg = RunConfig {
        step_size: mu,
        max_iters,
        log_every,
        ..RunConfig::default()
    };
    let (state, log) = py.detach(|| core_run(&net, &schedule.0, &cfg, epoch)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("step_size", mu)?;
    d.set_item("z", state.z.iter().map(vec_of).collect::<Vec<_>>())?;
    d.set_item("optimum", vec_of(net.optimum()))?;
    d.set_item("history", to_py(py, &log.logged())?)?;
    d.set_item("max_mean_step_residual", log.max_mean_step_residual())?;
    d.set_item("max_tracker_residual", log.max_tracker_residual())?;
    Ok(d)
}

/// Convergence constants for one epoch and schedule, the block-matrix
/// spectral radius at μL, and the inequality report of a `max_iters` run.
#[pyfunction]
#[pyo3(signature = (scenario, schedule, step_size, epoch=0, max_iters=2000))]
fn theory<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    schedule: &PySchedule,
    step_size: f64,
    epoch: usize,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let net = scenario.network(epoch)?;
    let c = compute_constants(&net.smoothness(), &schedule.0).map_err(err)?;
    let blocks = BlockSystem::from_constants(&c);
    let cfg = RunConfig {
        step_size,
        max_iters,
        ..RunConfig::default()
    };
    let (_, log) = py.detach(|| core_run(&net, &schedule.0, &cfg, epoch)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("constants", to_py(py, &c)?)?;
    d.set_item("step", to_py(py, &stepsize_admissible(step_size, &c))?)?;
    d.set_item("rho_at_zero", spectral_radius_h(&blocks, 0.0).map_err(err)?)?;
    d.set_item("rho_at_step", spectral_radius_h(&blocks, step_size * c.l).map_err(err)?)?;
    d.set_item("lemmas", to_py(py, &check_lemmas(&log, &c).map_err(err)?)?)?;
    Ok(d)
}

/// Full pipeline from a TOML config string; writes into `out_dir` when given.
#[pyfunction]
#[pyo3(signature = (config_toml="", out_dir=None))]
fn pipeline<'py>(py: Python<'py>, config_toml: &str, out_dir: Option<std::path::PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ExperimentConfig::from_toml(config_toml, "<python>").map_err(err)?;
    if let Some(dir) = out_dir {
        cfg.output.dir = dir;
    }
    let summary = py.detach(|| harness::pipeline(&cfg)).map_err(err)?;
    to_py(py, &summary)
}

#[pymodule]
fn gadiff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GadiffError", m.py().get_type::<GadiffError>())?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(central, m)?)?;
    m.add_function(wrap_pyfunction!(mahalanobis, m)?)?;
    m.add_function(wrap_pyfunction!(line_search, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(theory, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
