//! Python bindings: losses, the Gaussian model, trajectory runs and the
//! analysis checks.

use pyo3::exceptions::{PyNotImplementedError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ttadapt::analysis;
use ttadapt::cli::figures;
use ttadapt::dynamics::{self, ExperimentConfig, Mode, SampleStream};
use ttadapt::losses::SelfTrainingLoss;
use ttadapt::model::{self as core_model, GaussianModel};
use ttadapt::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Unsupported(_) => PyNotImplementedError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Loss", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyLoss {
    inner: SelfTrainingLoss,
}

#[pymethods]
impl PyLoss {
    /// `Loss("conj:exp")`
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            inner: spec.parse().map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn all() -> Vec<Self> {
        SelfTrainingLoss::ALL.iter().map(|l| Self { inner: *l }).collect()
    }

    #[getter]
    fn rule(&self) -> &'static str {
        self.inner.rule.as_str()
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.as_str()
    }

    fn psi(&self, u: f64) -> f64 {
        self.inner.psi(u)
    }

    fn dpsi(&self, u: f64) -> f64 {
        self.inner.dpsi(u)
    }

    fn ddpsi(&self, u: f64) -> f64 {
        self.inner.ddpsi(u)
    }

    fn pseudo_label(&self, margin: f64) -> f64 {
        self.inner.pseudo_label(margin)
    }

    /// `(L, a_min)` of the exponential tail bound, or `None`.
    fn club(&self) -> Option<(f64, f64)> {
        self.inner.club().map(|c| (c.l, c.a_min))
    }

    fn __repr__(&self) -> String {
        format!("Loss('{}')", self.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

#[pyclass(name = "GaussianModel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: GaussianModel,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(mu: Vec<f64>, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: GaussianModel::new(mu, sigma).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn axis_aligned(dim: usize, mu_norm: f64, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: GaussianModel::axis_aligned(dim, mu_norm, sigma).map_err(to_py)?,
        })
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().to_vec()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn best_error(&self) -> f64 {
        self.inner.best_error()
    }

    fn zero_one_loss(&self, w: Vec<f64>) -> PyResult<f64> {
        core_model::zero_one_loss(&self.inner, &w).map_err(to_py)
    }

    /// `(a, a_bar, b, r, cos)` of a weight vector.
    fn decompose(&self, w: Vec<f64>) -> PyResult<(f64, f64, f64, f64, f64)> {
        let d = core_model::decompose(&w, &self.inner).map_err(to_py)?;
        Ok((d.a, d.a_bar, d.b, d.r, d.cos))
    }

    fn __repr__(&self) -> String {
        format!(
            "GaussianModel(dim={}, |mu|={}, sigma={})",
            self.inner.dim(),
            self.inner.mu_norm(),
            self.inner.sigma()
        )
    }
}

/// Runs one experiment; returns a dict of per-iterate columns plus flags.
#[pyfunction]
#[pyo3(signature = (model, loss, eta, horizon, mode="stochastic", batch=32, seed=0, w_init=None, alternating=false))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    model: &PyModel,
    loss: &PyLoss,
    eta: f64,
    horizon: usize,
    mode: &str,
    batch: usize,
    seed: u64,
    w_init: Option<Vec<f64>>,
    alternating: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = match mode {
        "stochastic" => Mode::Stochastic,
        "population" => Mode::Population,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let w_init = w_init.unwrap_or_else(|| {
        let mut e = vec![0.0; model.inner.dim()];
        e[0] = 1.0;
        e
    });
    let config = ExperimentConfig {
        model: model.inner.clone(),
        loss: loss.inner,
        eta,
        mode,
        stream: if alternating {
            SampleStream::Alternating
        } else {
            SampleStream::Gaussian
        },
        batch_size: batch,
        horizon,
        seed,
        w_init,
    };
    let traj = dynamics::run(&config).map_err(to_py)?;
    let out = PyDict::new(py);
    let col = |f: fn(&dynamics::TrajectoryPoint) -> f64| traj.points.iter().map(f).collect::<Vec<f64>>();
    out.set_item("t", traj.points.iter().map(|p| p.t).collect::<Vec<usize>>())?;
    out.set_item("a", col(|p| p.a))?;
    out.set_item("b", col(|p| p.b))?;
    out.set_item("r", col(|p| p.r))?;
    out.set_item("cos", col(|p| p.cos))?;
    out.set_item("loss01", col(|p| p.loss01))?;
    out.set_item("overflow", traj.overflow)?;
    out.set_item("reduced_precision", traj.reduced_precision)?;
    Ok(out)
}

/// `(e1, e2)` = `(E[psi'(Z)], E[psi''(Z)])` at `(a, b)`.
#[pyfunction]
fn expectation_terms(loss: &PyLoss, a: f64, b: f64, model: &PyModel) -> PyResult<(f64, f64)> {
    let e = dynamics::expectation_terms(&loss.inner, a, b, &model.inner).map_err(to_py)?;
    Ok((e.e1, e.e2))
}

#[pyfunction]
fn epsilon_iteration_bound(eps: f64, r1: f64, eta: f64, mu_norm: f64, sigma: f64) -> u64 {
    dynamics::epsilon_iteration_bound(eps, r1, eta, mu_norm, sigma)
}

#[pyfunction]
#[pyo3(signature = (loss, l=None, a_min=None, a_max=None, step=analysis::DEFAULT_CLUB_STEP))]
fn verify_club<'py>(
    py: Python<'py>,
    loss: &PyLoss,
    l: Option<f64>,
    a_min: Option<f64>,
    a_max: Option<f64>,
    step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let club = loss.inner.club();
    let l = l
        .or(club.map(|c| c.l))
        .ok_or_else(|| PyValueError::new_err("L is required for this loss"))?;
    let a_min = a_min.or(club.map(|c| c.a_min)).unwrap_or(0.0);
    let a_max = a_max.unwrap_or_else(|| analysis::club_cap(l));
    let cert = analysis::verify_club(&loss.inner, l, a_min, a_max, step).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("passed", cert.passed)?;
    out.set_item("max_violation", cert.max_violation)?;
    out.set_item("worst_a", cert.worst_a)?;
    out.set_item("min_log_ratio", cert.min_log_ratio)?;
    out.set_item("evenness_passed", cert.evenness_passed)?;
    out.set_item("a_max", cert.a_max)?;
    Ok(out)
}

/// Returns `(sequence, bound_holds, tau_star, first_violation_t)`.
#[pyfunction]
#[pyo3(signature = (r1, c, l, horizon, equality=true))]
fn lemma_recursion_run(
    r1: f64,
    c: f64,
    l: f64,
    horizon: usize,
    equality: bool,
) -> PyResult<(Vec<f64>, bool, f64, Option<usize>)> {
    let (r, rep) = analysis::lemma_recursion_run(r1, c, l, horizon, equality).map_err(to_py)?;
    Ok((r, rep.bound_holds, rep.tau_star, rep.first_violation_t))
}

/// Returns `(mu_t, sigma_t, w_init)`.
#[pyfunction]
#[pyo3(signature = (d=10, seed=0))]
fn build_appendix_b_model(d: usize, seed: u64) -> PyResult<(Vec<f64>, f64, Vec<f64>)> {
    let m = figures::build_appendix_b_model(d, seed).map_err(to_py)?;
    Ok((m.mu_t, m.sigma_t, m.w_init))
}

#[pymodule]
#[pyo3(name = "ttadapt")]
fn py_ttadapt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLoss>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(expectation_terms, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_iteration_bound, m)?)?;
    m.add_function(wrap_pyfunction!(verify_club, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_recursion_run, m)?)?;
    m.add_function(wrap_pyfunction!(build_appendix_b_model, m)?)?;
    m.add("ETA_GRID", figures::ETA_GRID.to_vec())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
