//! Python bindings: graph construction and audits, the filtering and control
//! primitives, the bound formulas, and scenario execution.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::Path;

use rdag_sim::dynamics::Measurement;
use rdag_sim::engine::RunOutcome;
use rdag_sim::{self as core, SimError};

fn to_py_err(err: SimError) -> PyErr {
    match &err {
        SimError::Io(_) => PyIOError::new_err(err.to_string()),
        SimError::Numeric(_) | SimError::Assertion(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn measurements_from(neighbors: Vec<(usize, Vec<f64>)>) -> Vec<Measurement> {
    neighbors
        .into_iter()
        .map(|(sender, rel)| Measurement {
            receiver: usize::MAX,
            sender,
            relative: nalgebra_vec(rel),
        })
        .collect()
}

fn nalgebra_vec(v: Vec<f64>) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_vec(v)
}

/// Directed graph over dense integer ids.
#[pyclass(name = "Digraph", frozen)]
struct PyDigraph {
    inner: core::Digraph,
}

#[pymethods]
impl PyDigraph {
    #[new]
    fn new(n: usize, in_neighbors: Vec<Vec<usize>>) -> PyResult<Self> {
        Ok(Self { inner: core::Digraph::new(n, in_neighbors).map_err(to_py_err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn in_neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.n() {
            return Err(PyValueError::new_err(format!("vertex {i} out of range")));
        }
        Ok(self.inner.in_neighbors(i).to_vec())
    }

    fn in_degree(&self, i: usize) -> PyResult<usize> {
        Ok(self.in_neighbors(i)?.len())
    }

    fn out_neighbors(&self, j: usize) -> PyResult<Vec<usize>> {
        if j >= self.inner.n() {
            return Err(PyValueError::new_err(format!("vertex {j} out of range")));
        }
        Ok(self.inner.out_neighbors(j))
    }

    fn __repr__(&self) -> String {
        format!("Digraph(n={})", self.inner.n())
    }
}

/// Layered partition with redundancy parameter r.
#[pyclass(name = "RdagPartition", frozen)]
struct PyRdagPartition {
    inner: core::RdagPartition,
}

#[pymethods]
impl PyRdagPartition {
    #[new]
    fn new(levels: Vec<Vec<usize>>, r: usize) -> Self {
        Self { inner: core::RdagPartition::new(levels, r) }
    }

    #[getter]
    fn levels(&self) -> Vec<Vec<usize>> {
        self.inner.levels().to_vec()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    fn __repr__(&self) -> String {
        format!(
            "RdagPartition(levels={}, r={})",
            self.inner.num_levels(),
            self.inner.r()
        )
    }
}

/// Outcome of a validation pass: `ok` plus human-readable violations.
#[pyclass(name = "ValidationReport", frozen)]
struct PyValidationReport {
    #[pyo3(get)]
    ok: bool,
    #[pyo3(get)]
    violations: Vec<String>,
}

impl From<core::ValidationReport> for PyValidationReport {
    fn from(report: core::ValidationReport) -> Self {
        Self {
            ok: report.ok,
            violations: report.violations.iter().map(|v| v.to_string()).collect(),
        }
    }
}

#[pymethods]
impl PyValidationReport {
    fn __repr__(&self) -> String {
        format!("ValidationReport(ok={}, violations={})", self.ok, self.violations.len())
    }
}

/// Result of one simulation run.
#[pyclass(name = "RunSummary", frozen)]
struct PyRunSummary {
    outcome: RunOutcome,
}

#[pymethods]
impl PyRunSummary {
    #[getter]
    fn all_converged(&self) -> bool {
        self.outcome.all_converged
    }

    #[getter]
    fn steps(&self) -> usize {
        self.outcome.trace.records.len()
    }

    #[getter]
    fn max_input_norm(&self) -> f64 {
        self.outcome.report.max_input_norm
    }

    /// Assertion results as (name, passed, detail) tuples.
    #[getter]
    fn assertions(&self) -> Vec<(String, bool, String)> {
        self.outcome
            .assertions
            .iter()
            .map(|a| (a.name.clone(), a.passed, a.detail.clone()))
            .collect()
    }

    /// Empirical convergence time per normal agent (None if never converged).
    fn convergence_times<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new(py);
        for agent in &self.outcome.report.agents {
            dict.set_item(agent.agent_id, agent.empirical_time)?;
        }
        Ok(dict)
    }

    /// Error time series of one agent.
    fn errors_of(&self, agent_id: usize) -> PyResult<Vec<f64>> {
        if agent_id >= self.outcome.trace.agent_meta.len() {
            return Err(PyValueError::new_err(format!("agent {agent_id} out of range")));
        }
        Ok(self.outcome.trace.errors_of(agent_id))
    }

    /// Record times (seconds in continuous mode, steps in discrete mode).
    fn times(&self) -> Vec<f64> {
        self.outcome.trace.times()
    }

    /// Full analysis report as a JSON string.
    fn bound_report_json(&self) -> String {
        self.outcome.report.to_json()
    }

    /// Trace in the CSV schema, keeping every `thin`-th step.
    #[pyo3(signature = (thin = 1))]
    fn trace_csv(&self, thin: u64) -> String {
        self.outcome.trace.to_csv_string(thin)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunSummary(steps={}, all_converged={})",
            self.outcome.trace.records.len(),
            self.outcome.all_converged
        )
    }
}

/// A validated scenario configuration.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: core::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Load and validate a scenario JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: core::Scenario::load(Path::new(path)).map_err(to_py_err)? })
    }

    /// Parse and validate a scenario from a JSON string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let scenario = core::Scenario::from_json(text).map_err(to_py_err)?;
        scenario.validate().map_err(to_py_err)?;
        Ok(Self { inner: scenario })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
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
        self.inner.mode.as_str().to_string()
    }

    /// Effective configuration echo (all defaults materialized).
    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Precondition audits as (rdag, f_local, in_degree) reports.
    fn audit(&self) -> PyResult<(PyValidationReport, PyValidationReport, PyValidationReport)> {
        let built = self.inner.build().map_err(to_py_err)?;
        let audit = self.inner.audit(&built).map_err(to_py_err)?;
        Ok((audit.rdag.into(), audit.f_local.into(), audit.in_degree.into()))
    }

    /// Execute the run. `force` skips the precondition audits.
    #[pyo3(signature = (force = false))]
    fn run(&self, py: Python<'_>, force: bool) -> PyResult<PyRunSummary> {
        let scenario = self.inner.clone();
        let outcome = py
            .detach(move || core::run_scenario(&scenario, force))
            .map_err(to_py_err)?;
        Ok(PyRunSummary { outcome })
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, mode={})", self.inner.name, self.inner.mode.as_str())
    }
}

/// Layered graph with vertices numbered level by level. With `k` given,
/// each vertex samples `k` in-neighbors from the union of preceding levels
/// (seeded); otherwise it is wired to the full previous level.
#[pyfunction]
#[pyo3(signature = (level_sizes, k = None, seed = 0))]
fn build_layered_rdag(
    level_sizes: Vec<usize>,
    k: Option<usize>,
    seed: u64,
) -> PyResult<(PyDigraph, PyRdagPartition)> {
    let rule = match k {
        Some(k) => core::InDegreeRule::SampleFromPredecessors { k, seed },
        None => core::InDegreeRule::FullPreviousLevel,
    };
    let (graph, partition) = core::build_layered_rdag(&level_sizes, &rule).map_err(to_py_err)?;
    Ok((PyDigraph { inner: graph }, PyRdagPartition { inner: partition }))
}

/// k-circulant digraph: vertex i has in-neighbors (i+1)..(i+k) mod n.
#[pyfunction]
fn build_k_circulant(n: usize, k: usize) -> PyResult<PyDigraph> {
    Ok(PyDigraph { inner: core::build_k_circulant(n, k).map_err(to_py_err)? })
}

#[pyfunction]
fn validate_rdag(graph: &PyDigraph, partition: &PyRdagPartition) -> PyResult<PyValidationReport> {
    Ok(core::validate_rdag(&graph.inner, &partition.inner).map_err(to_py_err)?.into())
}

#[pyfunction]
fn validate_f_local(
    graph: &PyDigraph,
    adversaries: Vec<usize>,
    f: usize,
) -> PyResult<PyValidationReport> {
    let placement = core::AdversaryPlacement::new(adversaries, f);
    Ok(core::validate_f_local(&graph.inner, &placement).map_err(to_py_err)?.into())
}

#[pyfunction]
fn validate_in_degree(
    graph: &PyDigraph,
    subset: Vec<usize>,
    required: usize,
) -> PyResult<PyValidationReport> {
    Ok(core::validate_in_degree(&graph.inner, &subset, required).map_err(to_py_err)?.into())
}

#[pyfunction]
fn min_in_degree(graph: &PyDigraph, subset: Vec<usize>) -> PyResult<usize> {
    core::min_in_degree(&graph.inner, &subset).map_err(to_py_err)
}

/// Points on a circle of the given radius around `center`.
#[pyfunction]
fn formation_offsets_circle(
    n_points: usize,
    radius: f64,
    center: (f64, f64),
) -> PyResult<Vec<Vec<f64>>> {
    let offsets = core::formation_offsets_circle(n_points, radius, [center.0, center.1])
        .map_err(to_py_err)?;
    Ok(offsets.iter().map(|o| o.iter().copied().collect()).collect())
}

/// Retained in-neighbor ids after dropping the `f` with the largest relative
/// distance. `neighbors` is a list of (id, relative_vector) pairs.
#[pyfunction]
fn filter_neighbors(neighbors: Vec<(usize, Vec<f64>)>, f: usize) -> Vec<usize> {
    core::filter_neighbors(&measurements_from(neighbors), f)
}

/// Ids of in-neighbors farther than `eps_omega` from the receiver.
#[pyfunction]
#[pyo3(signature = (neighbors, eps_omega = 1e-9))]
fn omega_set(neighbors: Vec<(usize, Vec<f64>)>, eps_omega: f64) -> Vec<usize> {
    core::omega_set(&measurements_from(neighbors), eps_omega)
}

#[pyfunction]
fn control_weights_continuous(
    retained: Vec<usize>,
    omega_cardinality: usize,
    f: usize,
) -> PyResult<Vec<(usize, f64)>> {
    core::control_weights_continuous(&retained, omega_cardinality, f).map_err(to_py_err)
}

#[pyfunction]
fn control_weights_discrete(retained: Vec<usize>) -> PyResult<Vec<(usize, f64)>> {
    core::control_weights_discrete(&retained).map_err(to_py_err)
}

/// Saturated continuous-time control input. Returns (u, u_p_norm, gamma).
#[pyfunction]
#[pyo3(signature = (neighbors, weights, alpha, u_m, eps_sing = 1e-12))]
fn continuous_control(
    neighbors: Vec<(usize, Vec<f64>)>,
    weights: Vec<(usize, f64)>,
    alpha: f64,
    u_m: f64,
    eps_sing: f64,
) -> PyResult<(Vec<f64>, f64, f64)> {
    let dim = neighbors.first().map(|(_, v)| v.len()).unwrap_or(2);
    let out = core::continuous_control(
        &measurements_from(neighbors),
        &weights,
        alpha,
        u_m,
        eps_sing,
        dim,
    );
    Ok((out.u.iter().copied().collect(), out.u_p_norm, out.gamma))
}

/// Saturated discrete-time control input. Returns (u, u_p_norm, gamma).
#[pyfunction]
fn discrete_control(
    neighbors: Vec<(usize, Vec<f64>)>,
    weights: Vec<(usize, f64)>,
    u_m: f64,
) -> PyResult<(Vec<f64>, f64, f64)> {
    let dim = neighbors.first().map(|(_, v)| v.len()).unwrap_or(2);
    let out = core::discrete_control(&measurements_from(neighbors), &weights, u_m, dim);
    Ok((out.u.iter().copied().collect(), out.u_p_norm, out.gamma))
}

/// True exactly at steps that are multiples of `steps_per_dwell`.
#[pyfunction]
fn dwell_gate(step: u64, steps_per_dwell: u64) -> bool {
    core::dwell_gate(step, steps_per_dwell)
}

/// Finite-time convergence bound for a first-level agent.
#[pyfunction]
fn continuous_t1_bound(e0: f64, gamma_star: f64, r: usize, f: usize, alpha: f64) -> PyResult<f64> {
    core::continuous_t1_bound(e0, gamma_star, r, f, alpha).map_err(to_py_err)
}

/// Per-step contraction factor of the discrete law.
#[pyfunction]
fn discrete_contraction_factor(gamma_star: f64, r: usize, f: usize) -> PyResult<f64> {
    core::discrete_contraction_factor(gamma_star, r, f).map_err(to_py_err)
}

/// Envelope constant a with k*c^k*b0 <= a*beta^k for all k >= 0.
#[pyfunction]
fn geometric_series_envelope(b0: f64, c: f64, beta: f64) -> PyResult<f64> {
    core::geometric_series_envelope(b0, c, beta).map_err(to_py_err)
}

#[pymodule]
fn rdagsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDigraph>()?;
    m.add_class::<PyRdagPartition>()?;
    m.add_class::<PyValidationReport>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunSummary>()?;
    m.add_function(wrap_pyfunction!(build_layered_rdag, m)?)?;
    m.add_function(wrap_pyfunction!(build_k_circulant, m)?)?;
    m.add_function(wrap_pyfunction!(validate_rdag, m)?)?;
    m.add_function(wrap_pyfunction!(validate_f_local, m)?)?;
    m.add_function(wrap_pyfunction!(validate_in_degree, m)?)?;
    m.add_function(wrap_pyfunction!(min_in_degree, m)?)?;
    m.add_function(wrap_pyfunction!(formation_offsets_circle, m)?)?;
    m.add_function(wrap_pyfunction!(filter_neighbors, m)?)?;
    m.add_function(wrap_pyfunction!(omega_set, m)?)?;
    m.add_function(wrap_pyfunction!(control_weights_continuous, m)?)?;
    m.add_function(wrap_pyfunction!(control_weights_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(continuous_control, m)?)?;
    m.add_function(wrap_pyfunction!(discrete_control, m)?)?;
    m.add_function(wrap_pyfunction!(dwell_gate, m)?)?;
    m.add_function(wrap_pyfunction!(continuous_t1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(discrete_contraction_factor, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_series_envelope, m)?)?;
    Ok(())
}
