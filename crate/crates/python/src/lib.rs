//! Python bindings for the min-sum solver.

use minsum::async_engine::validate_schedule;
use minsum::engine::Trace;
use minsum::model::{denormalize_solution, NormalizationRecord};
use minsum::{EdgeParams, Error, QuadraticProblem, Status};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pyminsum, MinsumError, PyException);
create_exception!(pyminsum, NotWalkSummableError, MinsumError);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::NotWalkSummable { .. } => NotWalkSummableError::new_err(err.to_string()),
        Error::Io(e) => e.into(),
        other => MinsumError::new_err(other.to_string()),
    }
}

/// Normalized quadratic problem `min ½xᵀΓx − hᵀx` with unit diagonal.
#[pyclass(name = "Problem", module = "pyminsum", frozen)]
struct PyProblem {
    inner: QuadraticProblem,
    record: Option<NormalizationRecord>,
}

impl PyProblem {
    fn from_raw(raw: &minsum::RawProblem) -> PyResult<Self> {
        let (inner, record) = minsum::normalize(raw).map_err(to_py)?;
        Ok(PyProblem { inner, record: Some(record) })
    }
}

#[pymethods]
impl PyProblem {
    /// Build from off-diagonal couplings `(i, j, Γᵢⱼ)` of a unit-diagonal matrix.
    #[new]
    fn new(n: usize, couplings: Vec<(usize, usize, f64)>, h: Vec<f64>) -> PyResult<Self> {
        let inner = QuadraticProblem::new(n, &couplings, h).map_err(to_py)?;
        Ok(PyProblem { inner, record: None })
    }

    /// Load an instance file and normalize it.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_raw(&minsum::io::load_problem(path).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Self::from_raw(&minsum::io::parse_problem(text).map_err(to_py)?)
    }

    fn to_text(&self) -> String {
        minsum::io::format_problem(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[getter]
    fn couplings(&self) -> Vec<f64> {
        (0..self.inner.num_edges()).map(|k| self.inner.edge_coupling(k)).collect()
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.h().to_vec()
    }

    /// Directed edges in parameter order.
    fn arcs(&self) -> Vec<(usize, usize)> {
        (0..self.inner.num_arcs()).map(|id| self.inner.arc(id)).collect()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.n() {
            return Err(to_py(Error::LengthMismatch { expected: self.inner.n(), found: x.len() }));
        }
        Ok(self.inner.objective(&x))
    }

    /// Map a solution of the normalized system back to the loaded variables.
    fn denormalize(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        match &self.record {
            Some(rec) => denormalize_solution(&x, rec).map_err(to_py),
            None => Ok(x),
        }
    }

    fn __repr__(&self) -> String {
        format!("Problem(n={}, edges={})", self.inner.n(), self.inner.num_edges())
    }
}

#[pyclass(name = "SolveResult", module = "pyminsum", frozen, get_all)]
struct PySolveResult {
    /// `converged`, `ill-posed` or `max-iter`.
    status: String,
    iterations: u64,
    ill_posed_edge: Option<(usize, usize)>,
    x: Option<Vec<f64>>,
    residual: Option<f64>,
    gamma: Vec<f64>,
    z: Vec<f64>,
    /// `(t, delta_gamma, delta_z, residual)` per update.
    trace: Vec<(u64, f64, f64, f64)>,
    max_staleness: Option<u64>,
    forced_activations: Option<usize>,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!("SolveResult(status={:?}, iterations={})", self.status, self.iterations)
    }
}

fn status_parts(status: &Status) -> (String, Option<(usize, usize)>) {
    match *status {
        Status::Converged => ("converged".into(), None),
        Status::IllPosed { from, to, .. } => ("ill-posed".into(), Some((from, to))),
        Status::MaxIterReached => ("max-iter".into(), None),
        Status::Running => ("running".into(), None),
    }
}

fn trace_rows(trace: &Trace) -> Vec<(u64, f64, f64, f64)> {
    trace.rows.iter().map(|r| (r.t, r.delta_gamma, r.delta_z, r.residual)).collect()
}

fn initial_params(p: &QuadraticProblem, gamma0: Option<Vec<f64>>, z0: Option<Vec<f64>>) -> PyResult<EdgeParams> {
    let m = p.num_arcs();
    EdgeParams::new(p, gamma0.unwrap_or_else(|| vec![0.0; m]), z0.unwrap_or_else(|| vec![0.0; m])).map_err(to_py)
}

/// Run min-sum on `problem`. `schedule` is `"sync"` or `"async"`; the
/// `seed`, `activation_prob`, `max_delay` and `max_ticks` options only apply
/// to the asynchronous schedule.
#[pyfunction]
#[pyo3(signature = (
    problem, schedule = "sync", gamma0 = None, z0 = None, *, max_iter = None, tol = 1e-10,
    seed = 0, activation_prob = 0.5, max_delay = 3, max_ticks = 100_000
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    problem: &PyProblem,
    schedule: &str,
    gamma0: Option<Vec<f64>>,
    z0: Option<Vec<f64>>,
    max_iter: Option<usize>,
    tol: f64,
    seed: u64,
    activation_prob: f64,
    max_delay: u64,
    max_ticks: u64,
) -> PyResult<PySolveResult> {
    let p = &problem.inner;
    let init = initial_params(p, gamma0, z0)?;
    let (state, trace, schedule_report) = match schedule {
        "sync" => {
            let defaults = minsum::SolverConfig::for_problem(p);
            let cfg = minsum::SolverConfig {
                max_iter: max_iter.unwrap_or(defaults.max_iter),
                tol_gamma: tol,
                tol_z: tol,
                ..defaults
            };
            let (state, trace) = py.detach(|| minsum::run_sync(p, &init, &cfg)).map_err(to_py)?;
            (state, trace, None)
        }
        "async" => {
            if max_iter.is_some() {
                return Err(PyValueError::new_err("max_iter applies to the sync schedule; use max_ticks"));
            }
            let cfg = minsum::AsyncConfig { seed, activation_prob, max_delay, max_ticks, tol_gamma: tol, tol_z: tol };
            let run = py.detach(|| minsum::run_async(p, &init, &cfg)).map_err(to_py)?;
            let report = validate_schedule(&run.meta);
            (run.state, run.trace, Some(report))
        }
        other => return Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
    };
    let (status, ill_posed_edge) = status_parts(&state.status);
    Ok(PySolveResult {
        status,
        iterations: state.t,
        ill_posed_edge,
        x: state.x,
        residual: state.residual,
        gamma: state.params.gamma,
        z: state.params.z,
        trace: trace_rows(&trace),
        max_staleness: schedule_report.as_ref().map(|r| r.max_staleness),
        forced_activations: schedule_report.map(|r| r.forced_activations),
    })
}

/// Dense reference solution of `Γx = h`.
#[pyfunction]
fn direct_solve(problem: &PyProblem) -> PyResult<Vec<f64>> {
    minsum::direct_solve(&problem.inner).map_err(to_py)
}

/// Fixed point `γ*` of the variance update, iterated up from zero.
#[pyfunction]
#[pyo3(signature = (problem, tol = 1e-14))]
fn gamma_star(problem: &PyProblem, tol: f64) -> PyResult<Vec<f64>> {
    Ok(minsum::compute_gamma_star(&problem.inner, tol).map_err(to_py)?.gamma_star)
}

/// Default convex-decomposition witness `v`, one value per directed edge.
#[pyfunction]
fn witness(problem: &PyProblem) -> PyResult<Vec<f64>> {
    Ok(minsum::construct_witness(&problem.inner).map_err(to_py)?.v)
}

/// Whether `gamma0` is dominated by `witness` (the default witness if omitted).
#[pyfunction]
#[pyo3(signature = (problem, gamma0, witness = None))]
fn is_convex_dominated(problem: &PyProblem, gamma0: Vec<f64>, witness: Option<Vec<f64>>) -> PyResult<bool> {
    let p = &problem.inner;
    let w = match witness {
        Some(v) => minsum::Witness::new(p, v),
        None => minsum::construct_witness(p),
    }
    .map_err(to_py)?;
    minsum::is_convex_dominated(p, &gamma0, &w).map_err(to_py)
}

/// Spectral diagnostics as a dict; unavailable entries are `None`.
#[pyfunction]
#[pyo3(signature = (problem, tol = 1e-13))]
fn analyze<'py>(py: Python<'py>, problem: &PyProblem, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = minsum::analyze(&problem.inner, tol).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("walk_summable", r.walk_summable)?;
    d.set_item("rho_abs_r", r.rho_abs_r)?;
    d.set_item("rho_abs_a", r.rho_abs_a)?;
    d.set_item("gamma_star_min", r.gamma_star_min)?;
    d.set_item("gamma_star_max", r.gamma_star_max)?;
    d.set_item("gamma_star_iterations", r.gamma_star_iterations)?;
    d.set_item("witness_margin", r.witness_margin)?;
    d.set_item("x_infinity_residual", r.x_infinity_residual)?;
    d.set_item("x_infinity_gap", r.x_infinity_gap)?;
    Ok(d)
}

/// Add the classes, functions and exceptions to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(direct_solve, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_star, m)?)?;
    m.add_function(wrap_pyfunction!(witness, m)?)?;
    m.add_function(wrap_pyfunction!(is_convex_dominated, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add("MinsumError", m.py().get_type::<MinsumError>())?;
    m.add("NotWalkSummableError", m.py().get_type::<NotWalkSummableError>())?;
    Ok(())
}

#[pymodule]
fn pyminsum(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
