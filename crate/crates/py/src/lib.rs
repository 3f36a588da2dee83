//! Python bindings. Functions on grids cross the boundary as `(lo, hi, values)`.

use densfda::density::{normalize, DensityFn, GridFunction};
use densfda::error::DensError;
use densfda::frechet::{fve_curve, frechet_mean, FittedModel, MethodKind, Metric};
use densfda::grid::Grid;
use densfda::kde::{default_bandwidth, estimate_density as kde, KdeConfig, KernelSpec};
use densfda::metrics::{dist_l2, dist_wasserstein};
use densfda::regression::{regression_table, ScoreMethod, DEFAULT_FOLDS, DEFAULT_REPEATS};
use densfda::sphere::{fisher_rao_distance, fisher_rao_mean};
use densfda::transform::{TransformSpec, TransformedFn};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: DensError) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

fn parse<T: std::str::FromStr<Err = DensError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// A density on a uniform grid over `[lo, hi]`.
#[pyclass(frozen, skip_from_py_object, name = "Density", module = "densfda")]
#[derive(Clone)]
pub struct PyDensity {
    inner: DensityFn,
}

#[pymethods]
impl PyDensity {
    /// Floors at `floor` and renormalizes `values` given on the grid.
    #[new]
    #[pyo3(signature = (lo, hi, values, floor = 1e-6))]
    fn new(lo: f64, hi: f64, values: Vec<f64>, floor: f64) -> PyResult<Self> {
        let grid = Grid::new(lo, hi, values.len()).map_err(err)?;
        Ok(Self { inner: normalize(&grid, &values, floor).map_err(err)? })
    }

    #[getter]
    fn lo(&self) -> f64 {
        self.inner.grid().lo()
    }

    #[getter]
    fn hi(&self) -> f64 {
        self.inner.grid().hi()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.inner.grid().points()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn __call__(&self, x: f64) -> f64 {
        self.inner.eval(x)
    }

    fn __len__(&self) -> usize {
        self.inner.grid().len()
    }

    fn __repr__(&self) -> String {
        let g = self.inner.grid();
        format!("Density(lo={}, hi={}, m={})", g.lo(), g.hi(), g.len())
    }
}

/// A transformed density: log quantile density or log hazard function.
#[pyclass(frozen, skip_from_py_object, name = "Transformed", module = "densfda")]
#[derive(Clone)]
pub struct PyTransformed {
    inner: TransformedFn,
}

#[pymethods]
impl PyTransformed {
    #[getter]
    fn kind(&self) -> String {
        self.inner.spec().to_string()
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.inner.grid().points()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Back to a density on `m` points over `[lo, hi]` (default: the length
    /// of this function).
    #[pyo3(signature = (lo, hi, m = None))]
    fn inverse(&self, lo: f64, hi: f64, m: Option<usize>) -> PyResult<PyDensity> {
        let grid = Grid::new(lo, hi, m.unwrap_or(self.inner.grid().len())).map_err(err)?;
        Ok(PyDensity { inner: self.inner.spec().inverse(&self.inner, &grid).map_err(err)? })
    }
}

fn densities(sample: &[PyRef<'_, PyDensity>]) -> Vec<DensityFn> {
    sample.iter().map(|d| d.inner.clone()).collect()
}

/// Kernel estimate from raw observations on `m` points over `[lo, hi]`.
/// The bandwidth is in units of the data; by default `N^{-1/3}` of the
/// support width.
#[pyfunction]
#[pyo3(signature = (samples, lo, hi, m = 512, bandwidth = None, kernel = "gaussian"))]
fn estimate_density(samples: Vec<f64>, lo: f64, hi: f64, m: usize, bandwidth: Option<f64>, kernel: &str) -> PyResult<PyDensity> {
    let grid = Grid::new(lo, hi, m).map_err(err)?;
    let h = bandwidth.unwrap_or_else(|| default_bandwidth(samples.len()) * (hi - lo));
    let cfg = KdeConfig::new(h, grid).with_kernel(parse::<KernelSpec>(kernel)?);
    Ok(PyDensity { inner: kde(&samples, &cfg).map_err(err)? })
}

#[pyfunction]
fn lqd(f: PyRef<'_, PyDensity>) -> PyResult<PyTransformed> {
    Ok(PyTransformed { inner: TransformSpec::lqd().forward(&f.inner).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (f, delta = TransformSpec::DEFAULT_DELTA))]
fn log_hazard(f: PyRef<'_, PyDensity>, delta: f64) -> PyResult<PyTransformed> {
    let spec = TransformSpec::log_hazard(delta).map_err(err)?;
    Ok(PyTransformed { inner: spec.forward(&f.inner).map_err(err)? })
}

/// Distance between two densities: `wasserstein`, `l2` or `fisher-rao`.
#[pyfunction]
#[pyo3(signature = (f, g, metric = "wasserstein"))]
fn distance(f: PyRef<'_, PyDensity>, g: PyRef<'_, PyDensity>, metric: &str) -> PyResult<f64> {
    match metric.to_ascii_lowercase().as_str() {
        "wasserstein" | "w2" => dist_wasserstein(&f.inner, &g.inner),
        "l2" => dist_l2(&f.inner, &g.inner),
        "fisher-rao" | "fr" => fisher_rao_distance(&f.inner, &g.inner),
        other => Err(DensError::InvalidArgument(format!("unknown metric '{other}'"))),
    }
    .map_err(err)
}

/// Fréchet mean under `wasserstein`, `l2` or `fisher-rao`.
#[pyfunction]
#[pyo3(signature = (sample, metric = "wasserstein"))]
fn mean(sample: Vec<PyRef<'_, PyDensity>>, metric: &str) -> PyResult<PyDensity> {
    let fs = densities(&sample);
    let inner = match metric.to_ascii_lowercase().as_str() {
        "fisher-rao" | "fr" => fisher_rao_mean(&fs),
        m => frechet_mean(&fs, parse::<Metric>(m)?),
    }
    .map_err(err)?;
    Ok(PyDensity { inner })
}

/// Fraction of Fréchet variance explained by `K = 1..=k_max` components.
#[pyfunction]
#[pyo3(signature = (sample, method = "lqd", metric = "wasserstein", k_max = None, p = 0.9))]
fn fve<'py>(
    py: Python<'py>,
    sample: Vec<PyRef<'py, PyDensity>>,
    method: &str,
    metric: &str,
    k_max: Option<usize>,
    p: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let fs = densities(&sample);
    let (method, metric) = (parse::<MethodKind>(method)?, parse::<Metric>(metric)?);
    let report = py.detach(|| fve_curve(&fs, method, metric, k_max, p)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("method", report.method.to_string())?;
    d.set_item("metric", report.metric.to_string())?;
    d.set_item("v_infinity", report.v_infinity)?;
    d.set_item("fve", report.fve)?;
    d.set_item("selected_k", report.selected_k)?;
    d.set_item("reached", report.reached)?;
    Ok(d)
}

/// A fitted representation: `fpca`, `lqd`, `loghazard` or `hs`.
#[pyclass(frozen, skip_from_py_object, name = "Model", module = "densfda")]
pub struct PyModel {
    inner: FittedModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (sample, method = "lqd"))]
    fn new(sample: Vec<PyRef<'_, PyDensity>>, method: &str) -> PyResult<Self> {
        let fs = densities(&sample);
        Ok(Self { inner: FittedModel::fit(&fs, parse::<MethodKind>(method)?).map_err(err)? })
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method().to_string()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.system().eigenvalues.clone()
    }

    fn scores(&self) -> Vec<Vec<f64>> {
        self.inner.system().scores.clone()
    }

    fn center(&self) -> PyResult<PyDensity> {
        Ok(PyDensity { inner: self.inner.center().map_err(err)? })
    }

    /// The sample represented with `k` components.
    fn represent(&self, k: usize) -> PyResult<Vec<PyDensity>> {
        Ok(self.inner.represent(k).map_err(err)?.into_iter().map(|inner| PyDensity { inner }).collect())
    }

    /// The `k`-th mode of variation at `alpha` standard deviations.
    fn mode(&self, k: usize, alpha: f64) -> PyResult<PyDensity> {
        Ok(PyDensity { inner: self.inner.mode(k, alpha).map_err(err)? })
    }
}

/// Cross-validated functional linear regression of `y` on `lqd` or `fpca`
/// scores; one dict per `K`.
#[pyfunction]
#[pyo3(signature = (sample, y, ks, method = "lqd", folds = DEFAULT_FOLDS, repeats = DEFAULT_REPEATS, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn regress<'py>(
    py: Python<'py>,
    sample: Vec<PyRef<'py, PyDensity>>,
    y: Vec<f64>,
    ks: Vec<usize>,
    method: &str,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let fs = densities(&sample);
    let method = parse::<ScoreMethod>(method)?;
    let rows = py.detach(|| regression_table(&fs, &y, method, &ks, folds, repeats, seed)).map_err(err)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.to_string())?;
            d.set_item("k", r.k)?;
            d.set_item("cv_mse", r.cv_mse)?;
            d.set_item("r_squared", r.r_squared)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "densfda")]
fn densfda_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensity>()?;
    m.add_class::<PyTransformed>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(estimate_density, m)?)?;
    m.add_function(wrap_pyfunction!(lqd, m)?)?;
    m.add_function(wrap_pyfunction!(log_hazard, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(mean, m)?)?;
    m.add_function(wrap_pyfunction!(fve, m)?)?;
    m.add_function(wrap_pyfunction!(regress, m)?)?;
    Ok(())
}
