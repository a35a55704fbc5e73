//! Python module `nlpc_py`: box projections, the NLPC solver for Python
//! callables, and the mass-action steady-state tooling.
//!
//! Vectors cross the boundary as lists of floats and matrices as lists of
//! rows.

use std::str::FromStr;
use std::sync::Mutex;

use nlpc::bench::{self, ExperimentSpec, Model};
use nlpc::crn::sample_on_scc;
use nlpc::dynamics::integrate;
use nlpc::solver::{nlpc_solve, nlpc_solve_with_restarts};
use nlpc::{networks, IntegratorConfig, Matrix, ProjectorKind, RootProblem, SolveOutcome, SolverConfig, Vector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(nlpc_py, NlpcError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    NlpcError::new_err(e.to_string())
}

fn vector(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, n: usize) -> PyResult<Matrix> {
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("jacobian rows must have length {n}")));
    }
    Ok(Matrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

#[pyclass(name = "BoxDomain", module = "nlpc_py", frozen)]
struct PyBoxDomain {
    inner: nlpc::BoxDomain,
}

#[pymethods]
impl PyBoxDomain {
    #[new]
    fn new(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: nlpc::BoxDomain::new(lower, upper).map_err(err)?,
        })
    }

    #[staticmethod]
    fn nonnegative(n: usize) -> Self {
        Self {
            inner: nlpc::BoxDomain::nonnegative(n),
        }
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.inner.lower().to_vec()
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.inner.upper().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        x.len() == self.inner.dim() && self.inner.contains(&vector(x))
    }

    fn project_nonlinear(&self, z: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = self.inner.project_nonlinear(&vector(z), &vector(x)).map_err(err)?;
        Ok(p.as_slice().to_vec())
    }

    fn project_orthogonal(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = self.inner.project_orthogonal(&vector(z)).map_err(err)?;
        Ok(p.as_slice().to_vec())
    }

    /// `(blocked, moved, shrinkable)` index lists.
    fn index_sets(&self, x: Vec<f64>, d: Vec<f64>, alpha: f64) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let s = self.inner.index_sets(&vector(x), &vector(d), alpha).map_err(err)?;
        Ok((s.blocked, s.moved, s.shrinkable))
    }

    fn arc_displacement_norm(&self, x: Vec<f64>, d: Vec<f64>, alpha: f64) -> PyResult<f64> {
        self.inner.arc_displacement_norm(&vector(x), &vector(d), alpha).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("BoxDomain(lower={:?}, upper={:?})", self.inner.lower(), self.inner.upper())
    }
}

#[pyclass(name = "SolverConfig", module = "nlpc_py", frozen)]
struct PySolverConfig {
    inner: SolverConfig,
}

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (*, tau=None, alpha=None, sigma_newton=None, sigma_gradient=None, rho=None,
                        max_iterations=None, max_restarts=None, projector=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        tau: Option<f64>,
        alpha: Option<f64>,
        sigma_newton: Option<f64>,
        sigma_gradient: Option<f64>,
        rho: Option<f64>,
        max_iterations: Option<usize>,
        max_restarts: Option<usize>,
        projector: Option<&str>,
    ) -> PyResult<Self> {
        let d = SolverConfig::default();
        let inner = SolverConfig {
            tau: tau.unwrap_or(d.tau),
            alpha: alpha.unwrap_or(d.alpha),
            sigma_newton: sigma_newton.unwrap_or(d.sigma_newton),
            sigma_gradient: sigma_gradient.unwrap_or(d.sigma_gradient),
            rho: rho.unwrap_or(d.rho),
            max_iterations: max_iterations.unwrap_or(d.max_iterations),
            max_restarts: max_restarts.unwrap_or(d.max_restarts),
            projector: match projector {
                Some(p) => ProjectorKind::from_str(p).map_err(PyValueError::new_err)?,
                None => d.projector,
            },
            ..d
        };
        inner.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn max_iterations(&self) -> usize {
        self.inner.max_iterations
    }

    #[getter]
    fn max_restarts(&self) -> usize {
        self.inner.max_restarts
    }

    #[getter]
    fn projector(&self) -> &'static str {
        self.inner.projector.name()
    }
}

fn config_or_default(config: Option<&PySolverConfig>) -> SolverConfig {
    config.map_or_else(SolverConfig::default, |c| c.inner.clone())
}

#[pyclass(name = "SolveResult", module = "nlpc_py", frozen)]
struct PySolveResult {
    inner: SolveOutcome,
}

#[pymethods]
impl PySolveResult {
    #[getter]
    fn status(&self) -> &'static str {
        self.inner.status.name()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged()
    }

    #[getter]
    fn point(&self) -> Vec<f64> {
        self.inner.point.as_slice().to_vec()
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm
    }

    #[getter]
    fn restarts(&self) -> usize {
        self.inner.restarts
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    /// One dict per recorded iterate.
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .trace
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("k", r.k)?;
                d.set_item("kind", r.kind.name())?;
                d.set_item("stepsize", r.stepsize)?;
                d.set_item("residual_norm", r.residual_norm)?;
                d.set_item("theta", r.theta)?;
                d.set_item("zero_components", r.zero_components)?;
                d.set_item("cond_estimate", r.cond_estimate)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(status='{}', residual_norm={:e}, iterations={}, restarts={})",
            self.inner.status.name(),
            self.inner.residual_norm,
            self.inner.iterations,
            self.inner.restarts
        )
    }
}

/// A root problem whose residual and Jacobian are Python callables. The
/// first exception raised by a callback is kept and re-raised afterwards.
struct CallbackProblem {
    domain: nlpc::BoxDomain,
    residual: Py<PyAny>,
    jacobian: Py<PyAny>,
    error: Mutex<Option<PyErr>>,
}

impl CallbackProblem {
    fn call<T>(&self, f: &Py<PyAny>, x: &Vector, convert: impl FnOnce(Bound<'_, PyAny>) -> PyResult<T>) -> Option<T> {
        Python::attach(|py| {
            let out = f
                .bind(py)
                .call1((x.as_slice().to_vec(),))
                .and_then(convert);
            match out {
                Ok(v) => Some(v),
                Err(e) => {
                    self.error.lock().unwrap().get_or_insert(e);
                    None
                }
            }
        })
    }

    fn take_error(&self) -> Option<PyErr> {
        self.error.lock().unwrap().take()
    }
}

impl RootProblem for CallbackProblem {
    fn domain(&self) -> &nlpc::BoxDomain {
        &self.domain
    }

    fn eval_residual(&self, x: &Vector) -> Vector {
        let n = x.len();
        self.call(&self.residual, x, |v| v.extract::<Vec<f64>>())
            .filter(|v| v.len() == n)
            .map_or_else(|| Vector::from_element(n, f64::NAN), Vector::from_vec)
    }

    fn eval_jacobian(&self, x: &Vector) -> Matrix {
        let n = x.len();
        self.call(&self.jacobian, x, |v| matrix(v.extract::<Vec<Vec<f64>>>()?, n))
            .filter(|m| m.nrows() == n)
            .unwrap_or_else(|| Matrix::from_element(n, n, f64::NAN))
    }
}

/// Solve `f(x) = 0` over `domain` from `x0` with the NLPC iteration.
#[pyfunction]
#[pyo3(signature = (residual, jacobian, x0, domain, config=None))]
fn solve(
    py: Python<'_>,
    residual: Py<PyAny>,
    jacobian: Py<PyAny>,
    x0: Vec<f64>,
    domain: &PyBoxDomain,
    config: Option<&PySolverConfig>,
) -> PyResult<PySolveResult> {
    let problem = CallbackProblem {
        domain: domain.inner.clone(),
        residual,
        jacobian,
        error: Mutex::new(None),
    };
    let cfg = config_or_default(config);
    let x0 = vector(x0);
    let outcome = py.detach(|| nlpc_solve(&problem, &x0, &cfg));
    if let Some(e) = problem.take_error() {
        return Err(e);
    }
    Ok(PySolveResult {
        inner: outcome.map_err(err)?,
    })
}

#[pyclass(name = "Model", module = "nlpc_py", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// Parse a network description; totals come from its `moiety` or
    /// `conc` lines.
    #[staticmethod]
    #[pyo3(signature = (text, name="network"))]
    fn from_text(text: &str, name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Model::from_text(name, text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Model::bundled(name).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn species(&self) -> Vec<String> {
        self.inner.network.species().to_vec()
    }

    #[getter]
    fn moieties(&self) -> Vec<f64> {
        self.inner.target.moieties().as_slice().to_vec()
    }

    #[getter]
    fn conservation_matrix(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.basis.matrix_f64())
    }

    #[getter]
    fn initial_state(&self) -> Option<Vec<f64>> {
        self.inner.initial_state.as_ref().map(|x| x.as_slice().to_vec())
    }

    fn residual(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let f = self.inner.problem.residual(&vector(x)).map_err(err)?;
        Ok(f.as_slice().to_vec())
    }

    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.problem.jacobian(&vector(x)).map_err(err)?))
    }

    /// A random point of the compatibility class.
    fn sample(&self, seed: u64) -> PyResult<Vec<f64>> {
        let x = sample_on_scc(&self.inner.target, seed).map_err(err)?;
        Ok(x.as_slice().to_vec())
    }

    /// Solve for the steady state from `x0`, or from sampled points with
    /// restarts when `x0` is omitted.
    #[pyo3(signature = (x0=None, seed=0, config=None))]
    fn solve(&self, py: Python<'_>, x0: Option<Vec<f64>>, seed: u64, config: Option<&PySolverConfig>) -> PyResult<PySolveResult> {
        let cfg = config_or_default(config);
        let problem = self.inner.problem.as_ref();
        let target = &self.inner.target;
        let outcome = py.detach(|| match x0 {
            Some(x) => nlpc_solve(problem, &vector(x), &cfg),
            None => {
                let mut draw = 0;
                nlpc_solve_with_restarts(
                    problem,
                    || {
                        draw += 1;
                        sample_on_scc(target, seed.wrapping_add(draw)).ok()
                    },
                    &cfg,
                )
            }
        });
        Ok(PySolveResult {
            inner: outcome.map_err(err)?,
        })
    }

    /// Integrate the mass-action ODE; returns `(times, states)`.
    #[pyo3(signature = (x0, horizon, samples=2, rtol=1e-6, atol=1e-9))]
    fn integrate(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        horizon: f64,
        samples: usize,
        rtol: f64,
        atol: f64,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let cfg = IntegratorConfig {
            rtol,
            atol,
            horizon,
            samples,
            ..Default::default()
        };
        let net = &self.inner.network;
        let traj = py.detach(|| integrate(net, &vector(x0), &cfg)).map_err(err)?;
        let states = traj.states.iter().map(|x| x.as_slice().to_vec()).collect();
        Ok((traj.times, states))
    }

    /// Run one of the experiments (`"solve"`, `"compare"`, `"ablation"`)
    /// and return its CSV text.
    #[pyo3(signature = (kind, starts=50, seed=0, horizon=None))]
    fn experiment(&self, py: Python<'_>, kind: &str, starts: usize, seed: u64, horizon: Option<f64>) -> PyResult<String> {
        let mut spec = ExperimentSpec {
            starts,
            seed,
            ..Default::default()
        };
        if let Some(t) = horizon {
            spec.integrator.horizon = t;
        }
        let model = &self.inner;
        let mut out = Vec::new();
        py.detach(|| -> Result<(), String> {
            let io = |e: std::io::Error| e.to_string();
            match kind {
                "solve" => {
                    let rows = bench::run_solve(model, &spec).map_err(|e| e.to_string())?;
                    bench::write_solve_csv(model, &rows, &mut out).map_err(io)
                }
                "compare" => {
                    let rows = bench::run_compare(model, &spec).map_err(|e| e.to_string())?;
                    bench::write_compare_csv(&rows, &mut out).map_err(io)
                }
                "ablation" => {
                    let rows = bench::run_ablation(model, &spec).map_err(|e| e.to_string())?;
                    bench::write_ablation_csv(&rows, &mut out).map_err(io)
                }
                other => Err(format!("unknown experiment '{other}'")),
            }
        })
        .map_err(NlpcError::new_err)?;
        String::from_utf8(out).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(name='{}', species={}, moieties={})",
            self.inner.name,
            self.inner.network.n_species(),
            self.inner.basis.n_moieties()
        )
    }
}

/// Names of the networks shipped with the library.
#[pyfunction]
fn bundled_networks() -> Vec<&'static str> {
    networks::ALL.iter().map(|n| n.name).collect()
}

#[pymodule]
fn nlpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBoxDomain>()?;
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PySolveResult>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_networks, m)?)?;
    m.add("NlpcError", m.py().get_type::<NlpcError>())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn callables(py: Python<'_>, residual: &str, jacobian: &str) -> (Py<PyAny>, Py<PyAny>) {
        let eval = |src: &str| py.eval(&CString::new(src).unwrap(), None, None).unwrap().unbind();
        (eval(residual), eval(jacobian))
    }

    #[test]
    fn ragged_jacobian_is_rejected() {
        assert!(matrix(vec![vec![1.0, 2.0], vec![3.0]], 2).is_err());
        let m = matrix(vec![vec![1.0, 2.0], vec![3.0, 4.0]], 2).unwrap();
        assert_eq!(rows(&m), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn callback_problem_solves_and_reports_errors() {
        Python::initialize();
        Python::attach(|py| {
            let (f, j) = callables(py, "lambda x: [x[0] - 0.5, x[1] - 2.0]", "lambda x: [[1.0, 0.0], [0.0, 1.0]]");
            let problem = CallbackProblem {
                domain: nlpc::BoxDomain::nonnegative(2),
                residual: f,
                jacobian: j,
                error: Mutex::new(None),
            };
            let out = nlpc_solve(&problem, &vector(vec![3.0, 0.0]), &SolverConfig::default()).unwrap();
            assert!(out.converged());
            assert_eq!(out.point.as_slice(), &[0.5, 2.0]);
            assert!(problem.take_error().is_none());

            let (f, j) = callables(py, "lambda x: [1.0 / 0.0]", "lambda x: [[1.0]]");
            let problem = CallbackProblem {
                domain: nlpc::BoxDomain::nonnegative(1),
                residual: f,
                jacobian: j,
                error: Mutex::new(None),
            };
            assert!(problem.eval_residual(&vector(vec![1.0]))[0].is_nan());
            let e = problem.take_error().unwrap();
            assert!(e.is_instance_of::<pyo3::exceptions::PyZeroDivisionError>(py));
        });
    }
}
