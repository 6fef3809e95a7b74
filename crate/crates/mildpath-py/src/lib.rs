//! Python bindings for the `mildpath` crate.
//!
//! Paths are exchanged as lists of rows (`cells + 1` rows of `n` modes);
//! experiment configurations are exchanged as JSON text.

use mildpath::experiments::{emit_report, run_experiment as run_core, ExperimentConfig};
use mildpath::frac_calc;
use mildpath::mild_solver::{self, SolverConfig};
use mildpath::nonlinearity::{bounds_check, NonlinearityG, Profile};
use mildpath::paths::{generate_fbm, path_norm, GridPath, HolderParams as CoreParams, TimeGrid};
use mildpath::quadrature::QuadratureSpec;
use mildpath::spectral::{ModeVector, SpectralOperator as CoreOperator};
use mildpath::tensor_area::AreaOperator;
use mildpath::MildError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::Path as FsPath;

fn err(e: MildError) -> PyErr {
    match e {
        MildError::NoLocalSolution(_) | MildError::Io(_) | MildError::Regularization(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(p: &GridPath) -> Vec<Vec<f64>> {
    p.values.chunks(p.dim).map(|r| r.to_vec()).collect()
}

/// Diagonal generator `-A` given by its eigenvalues.
#[pyclass(name = "SpectralOperator", module = "mildpath_py", skip_from_py_object)]
#[derive(Clone)]
struct SpectralOperator {
    inner: CoreOperator,
}

#[pymethods]
impl SpectralOperator {
    #[new]
    #[pyo3(signature = (eigenvalues, kappa_hat = 0.25))]
    fn new(eigenvalues: Vec<f64>, kappa_hat: f64) -> PyResult<Self> {
        Ok(SpectralOperator { inner: CoreOperator::new(eigenvalues, kappa_hat).map_err(err)? })
    }

    /// Eigenvalues `1, 4, 9, ...` of the Dirichlet Laplacian on `(0, pi)`.
    #[staticmethod]
    #[pyo3(signature = (n, kappa_hat = 0.25))]
    fn squares(n: usize, kappa_hat: f64) -> PyResult<Self> {
        Ok(SpectralOperator { inner: CoreOperator::squares(n, kappa_hat).map_err(err)? })
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// `S(t) x` for a mode vector `x`.
    fn semigroup(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.semigroup_vec(t, &ModeVector::new(x)).map_err(err)?.coords)
    }

    fn norm_hat(&self, x: Vec<f64>) -> f64 {
        self.inner.norm_hat(&ModeVector::new(x))
    }

    fn __repr__(&self) -> String {
        format!("SpectralOperator(n={}, kappa_hat={})", self.inner.dim(), self.inner.kappa_hat())
    }
}

/// The exponent tuple `(hurst, beta, beta_p, beta_pp, alpha, gamma)`.
#[pyclass(name = "HolderParams", module = "mildpath_py", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct HolderParams {
    hurst: f64,
    beta: f64,
    beta_p: f64,
    beta_pp: f64,
    alpha: f64,
    gamma: f64,
}

impl HolderParams {
    fn core(&self) -> CoreParams {
        CoreParams { hurst: self.hurst, beta: self.beta, beta_p: self.beta_p, beta_pp: self.beta_pp, alpha: self.alpha, gamma: self.gamma }
    }
}

#[pymethods]
impl HolderParams {
    #[new]
    #[pyo3(signature = (hurst = None, beta = None, beta_p = None, beta_pp = None, alpha = None, gamma = None))]
    fn new(hurst: Option<f64>, beta: Option<f64>, beta_p: Option<f64>, beta_pp: Option<f64>, alpha: Option<f64>, gamma: Option<f64>) -> Self {
        let d = CoreParams::default();
        HolderParams {
            hurst: hurst.unwrap_or(d.hurst),
            beta: beta.unwrap_or(d.beta),
            beta_p: beta_p.unwrap_or(d.beta_p),
            beta_pp: beta_pp.unwrap_or(d.beta_pp),
            alpha: alpha.unwrap_or(d.alpha),
            gamma: gamma.unwrap_or(d.gamma),
        }
    }

    /// Raises `ValueError` naming the first violated admissibility inequality.
    fn validate(&self) -> PyResult<()> {
        self.core().validate().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "HolderParams(hurst={}, beta={}, beta_p={}, beta_pp={}, alpha={}, gamma={})",
            self.hurst, self.beta, self.beta_p, self.beta_pp, self.alpha, self.gamma
        )
    }
}

/// Piecewise-linear path on a uniform grid of `[0, horizon]`.
#[pyclass(name = "Path", module = "mildpath_py", skip_from_py_object)]
#[derive(Clone)]
struct Path {
    inner: GridPath,
}

#[pymethods]
impl Path {
    /// Builds a path from `cells + 1` rows of equal length.
    #[new]
    fn new(horizon: f64, values: Vec<Vec<f64>>) -> PyResult<Self> {
        if values.len() < 2 {
            return Err(PyValueError::new_err("a path needs at least two rows"));
        }
        let dim = values[0].len();
        if values.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("all rows must have the same length"));
        }
        let grid = TimeGrid::new(horizon, values.len() - 1).map_err(err)?;
        Ok(Path { inner: GridPath::new(grid, dim, values.concat()).map_err(err)? })
    }

    /// Mode-wise fractional Brownian motion scaled by `mode_weights`.
    #[staticmethod]
    #[pyo3(signature = (hurst, op, cells, mode_weights, seed, horizon = 1.0))]
    fn fbm(hurst: f64, op: &SpectralOperator, cells: usize, mode_weights: Vec<f64>, seed: u64, horizon: f64) -> PyResult<Self> {
        let grid = TimeGrid::new(horizon, cells).map_err(err)?;
        Ok(Path { inner: generate_fbm(hurst, &op.inner, grid, &mode_weights, seed).map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.grid.cells
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.grid.horizon
    }

    fn times(&self) -> Vec<f64> {
        self.inner.grid.points()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        rows(&self.inner)
    }

    /// Value at an arbitrary time by linear interpolation.
    fn at(&self, t: f64) -> Vec<f64> {
        use mildpath::paths::PathFn;
        self.inner.eval(t)
    }

    /// `(sup, seminorm, sup + seminorm)` of the `beta`-Hölder norm.
    #[pyo3(signature = (beta, weighted = false))]
    fn holder_norm(&self, beta: f64, weighted: bool) -> (f64, f64, f64) {
        let n = path_norm(&self.inner, beta, weighted);
        (n.sup, n.seminorm, n.full)
    }

    fn __repr__(&self) -> String {
        format!("Path(dim={}, cells={}, horizon={})", self.inner.dim, self.inner.grid.cells, self.inner.grid.horizon)
    }
}

/// Nonlinearity `G(u)` acting mode-wise.
#[pyclass(name = "Nonlinearity", module = "mildpath_py", skip_from_py_object)]
#[derive(Clone)]
struct Nonlinearity {
    inner: NonlinearityG,
}

#[pymethods]
impl Nonlinearity {
    /// Random example with algebraically decaying coefficients; `profile` is `"tanh"` or `"sin"`.
    #[staticmethod]
    #[pyo3(signature = (op, decay = 1.5, profile = "tanh", amplitude = 1.0, seed = 7))]
    fn example(op: &SpectralOperator, decay: f64, profile: &str, amplitude: f64, seed: u64) -> PyResult<Self> {
        let profile = match profile {
            "tanh" => Profile::Tanh,
            "sin" => Profile::Sin,
            other => return Err(PyValueError::new_err(format!("unknown profile {other:?}"))),
        };
        Ok(Nonlinearity { inner: NonlinearityG::example(&op.inner, decay, profile, amplitude, seed).map_err(err)? })
    }

    #[staticmethod]
    fn zero(op: &SpectralOperator) -> Self {
        Nonlinearity { inner: NonlinearityG::zero(&op.inner) }
    }

    /// The matrix of `G(u)` as `n` rows.
    fn matrix(&self, u: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let n = self.inner.n;
        if u.len() != n {
            return Err(err(MildError::Dimension { expected: n, got: u.len() }));
        }
        Ok(self.inner.g_matrix(&u).chunks(n).map(|r| r.to_vec()).collect())
    }

    /// Checks the growth and Lipschitz estimates on random samples and
    /// returns the largest observed `lhs / rhs` per inequality.
    #[pyo3(signature = (samples = 500, seed = 11))]
    fn bounds_check(&self, samples: usize, seed: u64) -> (bool, Vec<f64>) {
        let r = bounds_check(&self.inner, samples, seed);
        (r.all_hold(), r.worst_ratio.to_vec())
    }
}

/// Result of the fixed-point iteration.
#[pyclass(name = "FixedPoint", module = "mildpath_py", get_all, skip_from_py_object)]
struct FixedPoint {
    /// Path component on the reached grid.
    path: Vec<Vec<f64>>,
    times: Vec<f64>,
    /// `(iter, delta_w, ratio, horizon)` per step, `ratio` is `None` after a restart.
    history: Vec<(usize, f64, Option<f64>, f64)>,
    horizon: f64,
    residual: f64,
    threshold: f64,
    /// Largest Frobenius norm of the area component.
    area_max: f64,
}

#[pymethods]
impl FixedPoint {
    fn __repr__(&self) -> String {
        format!("FixedPoint(horizon={}, iterations={}, residual={:e})", self.horizon, self.history.len(), self.residual)
    }
}

/// Solves the mild equation driven by `driver` from `u0`.
#[pyfunction]
#[pyo3(signature = (op, driver, u0, g, params = None, tol = 1e-8, max_iter = 60, horizon = None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    op: &SpectralOperator,
    driver: &Path,
    u0: Vec<f64>,
    g: &Nonlinearity,
    params: Option<PyRef<'_, HolderParams>>,
    tol: f64,
    max_iter: usize,
    horizon: Option<f64>,
) -> PyResult<FixedPoint> {
    let params = params.map(|p| p.core()).unwrap_or_default();
    let a = AreaOperator::new(driver.inner.clone(), op.inner.clone()).map_err(err)?;
    let config = SolverConfig { horizon: horizon.unwrap_or(driver.inner.grid.horizon), tol, max_iter, ..Default::default() };
    let fp = mild_solver::solve_fixed_point(&a, &ModeVector::new(u0), &g.inner, &params, &config).map_err(err)?;
    Ok(FixedPoint {
        path: rows(&fp.pair.u),
        times: fp.pair.u.grid.points(),
        history: fp.history.iter().map(|r| (r.iter, r.delta, r.ratio, r.horizon)).collect(),
        horizon: fp.horizon,
        residual: fp.residual,
        threshold: fp.threshold,
        area_max: fp.pair.v.max_norm(),
    })
}

/// `int_s^t u d omega` by fractional calculus.
#[pyfunction]
#[pyo3(signature = (u, omega, s, t, alpha = 0.66, base = 16))]
fn young_integral(u: &Path, omega: &Path, s: f64, t: f64, alpha: f64, base: usize) -> PyResult<Vec<f64>> {
    let spec = QuadratureSpec { base, ..Default::default() };
    frac_calc::young_integral(&u.inner, &omega.inner, s, t, alpha, None, &spec).map_err(err)
}

/// Right-sided Weyl-Marchaud derivative of order `alpha` anchored at `s`, at `r`.
#[pyfunction]
#[pyo3(signature = (path, s, alpha, r, base = 16))]
fn frac_deriv_right(path: &Path, s: f64, alpha: f64, r: f64, base: usize) -> PyResult<Vec<f64>> {
    let spec = QuadratureSpec { base, ..Default::default() };
    Ok(frac_calc::frac_deriv_right(&path.inner, s, alpha, r, &spec).map_err(err)?.value)
}

/// Left-sided derivative of order `1 - alpha` of `path - path(t)`, at `r`.
#[pyfunction]
#[pyo3(signature = (path, t, one_minus_alpha, r, base = 16))]
fn frac_deriv_left(path: &Path, t: f64, one_minus_alpha: f64, r: f64, base: usize) -> PyResult<Vec<f64>> {
    let spec = QuadratureSpec { base, ..Default::default() };
    Ok(frac_calc::frac_deriv_left(&path.inner, t, one_minus_alpha, r, &spec).map_err(err)?.value)
}

/// Runs an experiment from JSON text and returns its criteria; with
/// `out_dir` the summary, detail CSVs and manifest are written as by the CLI.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir = None))]
fn run_experiment<'py>(py: Python<'py>, config_json: &str, out_dir: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let config = ExperimentConfig::from_json(config_json).map_err(err)?;
    let report = run_core(&config).map_err(err)?;
    if let Some(dir) = out_dir {
        emit_report(&report, &config, FsPath::new(dir)).map_err(err)?;
    }
    let out = PyDict::new(py);
    out.set_item("kind", report.kind.name())?;
    out.set_item("passed", report.passed())?;
    let criteria: Vec<(String, f64, f64, bool)> = report.criteria.iter().map(|c| (c.name.clone(), c.value, c.threshold, c.pass)).collect();
    out.set_item("criteria", criteria)?;
    Ok(out)
}

#[pymodule]
fn mildpath_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SpectralOperator>()?;
    m.add_class::<HolderParams>()?;
    m.add_class::<Path>()?;
    m.add_class::<Nonlinearity>()?;
    m.add_class::<FixedPoint>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(young_integral, m)?)?;
    m.add_function(wrap_pyfunction!(frac_deriv_right, m)?)?;
    m.add_function(wrap_pyfunction!(frac_deriv_left, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
