//! Python bindings: problems, fits, the synthetic generator, diagnostics and
//! the exhaustive reference search.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use greedy_dirty::diagnostics::diagnose;
use greedy_dirty::experiments::{self, default_sparsity, SynthSpec};
use greedy_dirty::files::{to_json, FitOutput, ProblemFile};
use greedy_dirty::oracle::exhaustive_best_fit as exhaustive;
use greedy_dirty::{
    CoefficientMatrix, DenseMatrix, Error, FitReport, GreedyConfig, MultiTaskProblem, StepKind,
    SupportObject, Task,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Multi-task regression data: one `(X, y)` pair per task, sharing `p` columns.
#[pyclass(name = "Problem", module = "greedy_dirty_py", frozen)]
struct PyProblem {
    inner: MultiTaskProblem,
}

#[pymethods]
impl PyProblem {
    /// `tasks` is a list of `(X, y)` with `X` given as a list of rows.
    #[new]
    fn new(tasks: Vec<(Vec<Vec<f64>>, Vec<f64>)>) -> PyResult<Self> {
        let tasks = tasks
            .into_iter()
            .map(|(x, y)| {
                Ok(Task {
                    x: DenseMatrix::from_rows(&x)?,
                    y,
                })
            })
            .collect::<Result<Vec<_>, Error>>()
            .map_err(py_err)?;
        Ok(Self {
            inner: MultiTaskProblem::new(tasks).map_err(py_err)?,
        })
    }

    /// Reads a problem file; returns `(problem, beta_star or None)`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<(Self, Option<Vec<Vec<f64>>>)> {
        let file = ProblemFile::read(path.as_ref()).map_err(py_err)?;
        let inner = file.to_problem().map_err(py_err)?;
        Ok((Self { inner }, file.beta_star.map(|b| b.to_rows())))
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    /// Sample count of each task.
    #[getter]
    fn n(&self) -> Vec<usize> {
        self.inner.tasks().iter().map(|t| t.n()).collect()
    }

    fn task(&self, j: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        if j >= self.inner.r() {
            return Err(PyValueError::new_err(format!("task {j} out of range")));
        }
        let t = self.inner.task(j);
        Ok((t.x.to_rows(), t.y.clone()))
    }

    fn loss(&self, beta: Vec<Vec<f64>>) -> PyResult<f64> {
        let beta = CoefficientMatrix::from_rows(&beta).map_err(py_err)?;
        greedy_dirty::loss(&self.inner, &beta).map_err(py_err)
    }

    fn to_json(&self, beta_star: Option<Vec<Vec<f64>>>) -> PyResult<String> {
        let beta = beta_star
            .map(|b| CoefficientMatrix::from_rows(&b))
            .transpose()
            .map_err(py_err)?;
        to_json(&ProblemFile::new(&self.inner, beta, None)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(p={}, r={}, n={:?})",
            self.inner.p(),
            self.inner.r(),
            self.n()
        )
    }
}

/// Outcome of a greedy fit.
#[pyclass(name = "FitResult", module = "greedy_dirty_py", frozen)]
struct PyFitResult {
    inner: FitReport,
}

#[pymethods]
impl PyFitResult {
    /// p × r nested rows.
    #[getter]
    fn coefficients(&self) -> Vec<Vec<f64>> {
        self.inner.coefficients.to_rows()
    }

    #[getter]
    fn rows(&self) -> Vec<usize> {
        self.inner.pattern.rows.iter().copied().collect()
    }

    /// `(feature, task)` pairs.
    #[getter]
    fn singletons(&self) -> Vec<(usize, usize)> {
        self.inner.pattern.singletons.iter().copied().collect()
    }

    #[getter]
    fn final_loss(&self) -> f64 {
        self.inner.final_loss
    }

    #[getter]
    fn initial_loss(&self) -> f64 {
        self.inner.initial_loss
    }

    #[getter]
    fn termination(&self) -> PyResult<String> {
        let text = to_json(&self.inner.termination).map_err(py_err)?;
        Ok(text.trim().trim_matches('"').to_string())
    }

    #[getter]
    fn forward_steps(&self) -> usize {
        self.inner.forward_steps()
    }

    #[getter]
    fn backward_steps(&self) -> usize {
        self.inner.backward_steps()
    }

    /// `(kind, object, feature, task or None, reward_or_cost, loss_after)` per step.
    #[allow(clippy::type_complexity)]
    fn steps(&self) -> Vec<(&'static str, &'static str, usize, Option<usize>, f64, f64)> {
        self.inner
            .steps
            .iter()
            .map(|s| {
                let kind = match s.kind {
                    StepKind::Forward => "forward",
                    StepKind::Backward => "backward",
                };
                let (object, feature, task) = match s.object {
                    SupportObject::Singleton { feature, task } => {
                        ("singleton", feature, Some(task))
                    }
                    SupportObject::Row { feature } => ("row", feature, None),
                };
                (kind, object, feature, task, s.reward_or_cost, s.loss_after)
            })
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&FitOutput::new(self.inner.clone(), None)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(rows={}, singletons={}, final_loss={:e}, termination={:?})",
            self.inner.pattern.rows.len(),
            self.inner.pattern.singletons.len(),
            self.inner.final_loss,
            self.inner.termination
        )
    }
}

fn config(epsilon: f64, w: f64, nu: f64, rows_enabled: bool, max_steps: usize) -> GreedyConfig {
    GreedyConfig {
        epsilon,
        w,
        nu,
        rows_enabled,
        max_forward_steps: max_steps,
        ..GreedyConfig::default()
    }
}

#[pyfunction]
#[pyo3(signature = (problem, epsilon=1e-4, w=1.5, nu=0.5, rows_enabled=true, max_steps=1000))]
fn fit(
    py: Python<'_>,
    problem: &PyProblem,
    epsilon: f64,
    w: f64,
    nu: f64,
    rows_enabled: bool,
    max_steps: usize,
) -> PyResult<PyFitResult> {
    let cfg = config(epsilon, w, nu, rows_enabled, max_steps);
    let inner = py
        .detach(|| greedy_dirty::fit(&problem.inner, &cfg))
        .map_err(py_err)?;
    Ok(PyFitResult { inner })
}

/// Single-task greedy on every task; no shared rows.
#[pyfunction]
#[pyo3(signature = (problem, epsilon=1e-4, nu=0.5, max_steps=1000))]
fn foba(
    py: Python<'_>,
    problem: &PyProblem,
    epsilon: f64,
    nu: f64,
    max_steps: usize,
) -> PyResult<PyFitResult> {
    let cfg = config(epsilon, 1.0, nu, false, max_steps);
    let inner = py
        .detach(|| experiments::foba_single_task(&problem.inner, &cfg))
        .map_err(py_err)?;
    Ok(PyFitResult { inner })
}

/// Returns `(problem, beta_star)`.
#[pyfunction]
#[pyo3(signature = (p, kappa, n, seed=0, r=2, s=None, noise_variance=0.1))]
fn gen_synthetic(
    p: usize,
    kappa: f64,
    n: usize,
    seed: u64,
    r: usize,
    s: Option<usize>,
    noise_variance: f64,
) -> PyResult<(PyProblem, Vec<Vec<f64>>)> {
    let spec = SynthSpec {
        p,
        r,
        s: s.unwrap_or_else(|| default_sparsity(p)),
        kappa,
        n,
        noise_variance,
        seed,
    };
    let (inner, beta) = experiments::gen_synthetic(&spec).map_err(py_err)?;
    Ok((PyProblem { inner }, beta.to_rows()))
}

#[pyfunction]
fn loss(problem: &PyProblem, beta: Vec<Vec<f64>>) -> PyResult<f64> {
    problem.loss(beta)
}

#[pyfunction]
fn theta(n: usize, s: usize, p: usize, kappa: f64) -> PyResult<f64> {
    experiments::theta(n, s, p, kappa).map_err(py_err)
}

#[pyfunction]
fn n_for_theta(theta: f64, s: usize, p: usize, kappa: f64) -> PyResult<usize> {
    experiments::n_for_theta(theta, s, p, kappa).map_err(py_err)
}

/// Recovery-theory quantities as a dict; `w` defaults to `d − 0.5`.
#[pyfunction]
#[pyo3(signature = (problem, beta_star, d, s, w=None, nu=0.5))]
fn diagnostics<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    beta_star: Vec<Vec<f64>>,
    d: usize,
    s: usize,
    w: Option<f64>,
    nu: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let beta = CoefficientMatrix::from_rows(&beta_star).map_err(py_err)?;
    let w = w.unwrap_or(d as f64 - 0.5);
    let report = py
        .detach(|| diagnose(&problem.inner, &beta, d, s, w, nu))
        .map_err(py_err)?;
    json_to_py(py, &to_json(&report).map_err(py_err)?)
}

/// Loss-minimizing pattern within the budgets, as a dict with `rows`,
/// `singletons`, `coefficients` and `loss`.
#[pyfunction]
fn exhaustive_best_fit<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    max_singletons: usize,
    max_rows: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let best = py
        .detach(|| exhaustive(&problem.inner, max_singletons, max_rows))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item(
        "rows",
        best.pattern.rows.iter().copied().collect::<Vec<_>>(),
    )?;
    out.set_item(
        "singletons",
        best.pattern.singletons.iter().copied().collect::<Vec<_>>(),
    )?;
    out.set_item("coefficients", best.coefficients.to_rows())?;
    out.set_item("loss", best.loss)?;
    Ok(out)
}

#[pymodule]
fn greedy_dirty_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(foba, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    m.add_function(wrap_pyfunction!(n_for_theta, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_best_fit, m)?)?;
    Ok(())
}
