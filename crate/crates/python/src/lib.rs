//! Python bindings. Samples are lists of equal-length float lists; labels
//! and cluster indices are 0-based integers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use scpkb::classify::{self, LabeledSample};
use scpkb::harness::{self, ExperimentSpec};
use scpkb::inference;
use scpkb::mixtures::{self, EmOptions};
use scpkb::mle::{self, Algorithm, FitOptions};
use scpkb::regression::{self, DesignMatrix};
use scpkb::{density, sampling};
use scpkb::{DirectionalSample, Error, Family, RngStream, UnitVector};

fn err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for scpkb::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn family(name: &str) -> PyResult<Family> {
    name.parse().py()
}

fn to_sample(rows: Vec<Vec<f64>>, project: bool) -> PyResult<DirectionalSample> {
    if project {
        DirectionalSample::from_rows_projected(rows).py()
    } else {
        DirectionalSample::from_rows(rows).py()
    }
}

/// A single SC or PKB law in the unconstrained `mu` parameterization.
#[pyclass(frozen, skip_from_py_object, name = "SphericalParams")]
#[derive(Clone)]
struct PySphericalParams(scpkb::SphericalParams);

#[pymethods]
impl PySphericalParams {
    #[new]
    fn new(family: &str, mu: Vec<f64>) -> PyResult<Self> {
        Ok(Self(scpkb::SphericalParams::new(self::family(family)?, mu).py()?))
    }

    /// Builds the law from a direction (normalized here) and a concentration.
    #[staticmethod]
    fn from_direction(family: &str, m: Vec<f64>, rho: f64) -> PyResult<Self> {
        let m = UnitVector::project(m).py()?;
        Ok(Self(scpkb::SphericalParams::from_direction(self::family(family)?, &m, rho).py()?))
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family.as_str()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.0.mu().to_vec()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.0.rho()
    }

    /// Location direction, or None for the uniform law.
    #[getter]
    fn direction(&self) -> Option<Vec<f64>> {
        self.0.direction().map(UnitVector::into_vec)
    }

    fn logpdf(&self, y: Vec<f64>) -> PyResult<f64> {
        density::logpdf(&y, &self.0).py()
    }

    #[pyo3(signature = (n, seed, stream = 0))]
    fn sample(&self, n: usize, seed: u64, stream: u64) -> PyResult<Vec<Vec<f64>>> {
        Ok(sampling::sample(&self.0, n, &mut RngStream::new(seed, stream)).py()?.to_rows())
    }

    fn __repr__(&self) -> String {
        format!("SphericalParams(family='{}', rho={:.6}, mu={:?})", self.0.family, self.0.rho(), self.0.mu())
    }
}

#[pyclass(frozen, get_all, name = "FitResult")]
struct PyFitResult {
    params: PySphericalParams,
    loglik: f64,
    iterations: usize,
    converged: bool,
    algorithm: String,
    trace: Vec<f64>,
}

impl From<mle::FitResult> for PyFitResult {
    fn from(r: mle::FitResult) -> Self {
        Self {
            params: PySphericalParams(r.params),
            loglik: r.loglik,
            iterations: r.iterations,
            converged: r.converged,
            algorithm: r.algorithm.to_string(),
            trace: r.trace,
        }
    }
}

/// Maximum-likelihood fit with Newton-Raphson ("nr") or the hybrid scheme.
#[pyfunction]
#[pyo3(signature = (y, family, algorithm = "nr", tol = 1e-6, max_iter = 100, project = false))]
fn fit(y: Vec<Vec<f64>>, family: &str, algorithm: &str, tol: f64, max_iter: usize, project: bool) -> PyResult<PyFitResult> {
    let y = to_sample(y, project)?;
    let algorithm: Algorithm = algorithm.parse().py()?;
    let r = mle::fit(&y, self::family(family)?, algorithm, FitOptions { tol, max_iter }).py()?;
    Ok(r.into())
}

#[pyfunction]
fn loglik(y: Vec<Vec<f64>>, params: &PySphericalParams) -> PyResult<f64> {
    mle::loglik(&to_sample(y, false)?, &params.0).py()
}

#[pyclass(frozen, get_all, name = "TwoSampleTest")]
struct PyTwoSampleTest {
    lambda_: f64,
    df: usize,
    p_asymptotic: f64,
    p_bootstrap: Option<f64>,
    h0_direction: Vec<f64>,
    h0_rho: (f64, f64),
    h1: (PySphericalParams, PySphericalParams),
}

/// Likelihood-ratio test of a common location; `bootstrap > 0` adds a
/// parametric-bootstrap p-value.
#[pyfunction]
#[pyo3(signature = (y1, y2, family, bootstrap = 0, seed = 1, project = false))]
fn lrt(y1: Vec<Vec<f64>>, y2: Vec<Vec<f64>>, family: &str, bootstrap: usize, seed: u64, project: bool) -> PyResult<PyTwoSampleTest> {
    let (s1, s2) = (to_sample(y1, project)?, to_sample(y2, project)?);
    let t = inference::lrt_with_bootstrap(&s1, &s2, self::family(family)?, bootstrap, &RngStream::new(seed, 0)).py()?;
    Ok(PyTwoSampleTest {
        lambda_: t.lambda,
        df: t.df,
        p_asymptotic: t.p_asymptotic,
        p_bootstrap: t.p_bootstrap.map(|b| b.p_value),
        h0_direction: t.h0_fit.m.into_vec(),
        h0_rho: (t.h0_fit.rho1, t.h0_fit.rho2),
        h1: (PySphericalParams(t.h1_fit.0.params), PySphericalParams(t.h1_fit.1.params)),
    })
}

#[pyclass(frozen, name = "RegressionModel")]
struct PyRegressionModel {
    model: regression::RegressionModel,
    intercept: bool,
}

impl PyRegressionModel {
    fn design(&self, x: Vec<Vec<f64>>) -> PyResult<DesignMatrix> {
        if self.intercept {
            DesignMatrix::with_intercept(x).py()
        } else {
            DesignMatrix::from_rows(x).py()
        }
    }
}

#[pymethods]
impl PyRegressionModel {
    /// Coefficients as a `p x (d+1)` nested list.
    #[getter]
    fn coefficients(&self) -> Vec<Vec<f64>> {
        (0..self.model.p).map(|j| (0..self.model.dim).map(|k| self.model.coef(j, k)).collect()).collect()
    }

    #[getter]
    fn standard_errors(&self) -> Vec<Vec<f64>> {
        let m = &self.model;
        (0..m.p).map(|j| (0..m.dim).map(|k| m.se[k * m.p + j]).collect()).collect()
    }

    #[getter]
    fn loglik(&self) -> f64 {
        self.model.loglik
    }

    #[getter]
    fn converged(&self) -> bool {
        self.model.converged
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.model.family.as_str()
    }

    /// Predicted directions for covariate rows (intercept added as at fit time).
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let p = regression::predict(&self.model, &self.design(x)?).py()?;
        Ok(p.rows.into_iter().map(UnitVector::into_vec).collect())
    }

    /// Mean inner product between responses and fitted directions.
    fn fit_metric(&self, y: Vec<Vec<f64>>, x: Vec<Vec<f64>>) -> PyResult<f64> {
        let p = regression::predict(&self.model, &self.design(x)?).py()?;
        regression::fit_metric(&to_sample(y, false)?, &p).py()
    }
}

/// Spherical regression of unit responses on covariate rows.
#[pyfunction]
#[pyo3(signature = (y, x, family, intercept = true, project = false))]
fn fit_regression(y: Vec<Vec<f64>>, x: Vec<Vec<f64>>, family: &str, intercept: bool, project: bool) -> PyResult<PyRegressionModel> {
    let y = to_sample(y, project)?;
    let design = if intercept {
        DesignMatrix::with_intercept(x).py()?
    } else {
        DesignMatrix::from_rows(x).py()?
    };
    let model = regression::fit_regression(&y, &design, self::family(family)?, FitOptions::default()).py()?;
    Ok(PyRegressionModel { model, intercept })
}

#[pyclass(frozen, name = "Classifier")]
struct PyClassifier(classify::Classifier);

#[pymethods]
impl PyClassifier {
    #[getter]
    fn groups(&self) -> Vec<PySphericalParams> {
        self.0.group_params.iter().cloned().map(PySphericalParams).collect()
    }

    fn predict(&self, y: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        classify::predict_all(&self.0, &to_sample(y, false)?).py()
    }

    fn scores(&self, y0: Vec<f64>) -> PyResult<Vec<f64>> {
        classify::discriminant_scores(&self.0, &y0).py()
    }
}

fn labeled(y: Vec<Vec<f64>>, labels: Vec<usize>, project: bool) -> PyResult<LabeledSample> {
    LabeledSample::new(to_sample(y, project)?, labels).py()
}

/// Maximum-likelihood discriminant rule from 0-based group labels.
#[pyfunction]
#[pyo3(signature = (y, labels, family, project = false))]
fn train_classifier(y: Vec<Vec<f64>>, labels: Vec<usize>, family: &str, project: bool) -> PyResult<PyClassifier> {
    Ok(PyClassifier(classify::train(&labeled(y, labels, project)?, self::family(family)?).py()?))
}

/// Repeated stratified cross-validation; returns (mean, median) accuracy.
#[pyfunction]
#[pyo3(signature = (y, labels, family, folds = 10, repeats = 1, seed = 1, project = false))]
fn cross_validate(
    y: Vec<Vec<f64>>,
    labels: Vec<usize>,
    family: &str,
    folds: usize,
    repeats: usize,
    seed: u64,
    project: bool,
) -> PyResult<(f64, f64)> {
    let data = labeled(y, labels, project)?;
    let cv = classify::cross_validate(&data, self::family(family)?, folds, repeats, &RngStream::new(seed, 0)).py()?;
    Ok((cv.mean, cv.median))
}

#[pyclass(frozen, get_all, name = "MixtureModel")]
struct PyMixtureModel {
    k: usize,
    weights: Vec<f64>,
    components: Vec<PySphericalParams>,
    loglik: f64,
    bic: f64,
    icl: f64,
    assignments: Vec<usize>,
    converged: bool,
}

impl From<mixtures::MixtureModel> for PyMixtureModel {
    fn from(m: mixtures::MixtureModel) -> Self {
        Self {
            k: m.k,
            assignments: m.map_assignments(),
            weights: m.weights,
            components: m.components.into_iter().map(PySphericalParams).collect(),
            loglik: m.loglik,
            bic: m.bic,
            icl: m.icl,
            converged: m.converged,
        }
    }
}

/// EM fit of a `k`-component mixture.
#[pyfunction]
#[pyo3(signature = (y, k, family, n_starts = 10, seed = 1, project = false))]
fn em_fit(y: Vec<Vec<f64>>, k: usize, family: &str, n_starts: usize, seed: u64, project: bool) -> PyResult<PyMixtureModel> {
    let opts = EmOptions {
        n_starts,
        ..EmOptions::default()
    };
    let m = mixtures::em_fit(&to_sample(y, project)?, k, self::family(family)?, opts, &RngStream::new(seed, 0)).py()?;
    Ok(m.into())
}

/// Fits K = 1..=k_max; returns (models, chosen K by BIC, chosen K by ICL).
/// Failed K values are left out of the list.
#[pyfunction]
#[pyo3(signature = (y, family, k_max, n_starts = 10, seed = 1, project = false))]
fn select_k(
    y: Vec<Vec<f64>>,
    family: &str,
    k_max: usize,
    n_starts: usize,
    seed: u64,
    project: bool,
) -> PyResult<(Vec<PyMixtureModel>, Option<usize>, Option<usize>)> {
    let opts = EmOptions {
        n_starts,
        ..EmOptions::default()
    };
    let sel = mixtures::select_k(&to_sample(y, project)?, self::family(family)?, k_max, opts, &RngStream::new(seed, 0)).py()?;
    let models = sel.fits.into_iter().filter_map(|f| f.model).map(PyMixtureModel::from).collect();
    Ok((models, sel.best_bic, sel.best_icl))
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    mixtures::adjusted_rand_index(&a, &b).py()
}

type ReportRows = Vec<(String, String, f64, f64, usize)>;

/// Runs a simulation preset from key = value text; returns
/// (cell, statistic, value, mc_stderr, replicates) rows.
#[pyfunction]
fn run_experiment(config: &str) -> PyResult<ReportRows> {
    let spec = ExperimentSpec::from_config_str(config, None).py()?;
    let t = harness::run_experiment(&spec).py()?;
    Ok(t.rows.into_iter().map(|r| (r.cell, r.statistic, r.value, r.mc_stderr, r.replicates)).collect())
}

#[pymodule]
fn pyscpkb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySphericalParams>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyTwoSampleTest>()?;
    m.add_class::<PyRegressionModel>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyMixtureModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(loglik, m)?)?;
    m.add_function(wrap_pyfunction!(lrt, m)?)?;
    m.add_function(wrap_pyfunction!(fit_regression, m)?)?;
    m.add_function(wrap_pyfunction!(train_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(em_fit, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
