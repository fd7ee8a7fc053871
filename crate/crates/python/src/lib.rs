//! Python bindings: datasets, metrics, training, evaluation and model files.
//! Matrices cross the boundary as lists of rows.

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mapml::bench::Method;
use mapml::eval::{self, ReferenceSet};
use mapml::io::{self, LabelColumn, MnistSplit, SyntheticSpec};
use mapml::{Dataset, Error, LatentModel, Metric, TrainConfig, TrainResult};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "Metric", module = "pymapml", from_py_object)]
#[derive(Clone)]
struct PyMetric {
    inner: Metric,
}

#[pymethods]
impl PyMetric {
    #[new]
    fn new(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: Metric::from_matrix(to_array(matrix)?).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        Self {
            inner: Metric::identity(dim),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.matrix())
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    fn min_eigenvalue(&self) -> PyResult<f64> {
        self.inner.min_eigenvalue().map_err(to_py)
    }

    /// Squared Mahalanobis distance between two points.
    fn distance_sq(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        mapml::metric::mahalanobis_sq(&self.inner, (&a[..]).into(), (&b[..]).into()).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Metric(dim={}, frobenius_norm={:.6})", self.inner.dim(), self.inner.frobenius_norm())
    }
}

#[pyclass(name = "Dataset", module = "pymapml", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// `features` is a list of rows; `labels` are label strings (or ints).
    #[new]
    fn new(features: Vec<Vec<f64>>, labels: Vec<Bound<'_, PyAny>>) -> PyResult<Self> {
        let labels: Vec<String> = labels
            .iter()
            .map(|l| l.str().map(|s| s.to_string()))
            .collect::<PyResult<_>>()?;
        Ok(Self {
            inner: Dataset::new(to_array(features)?, &labels).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.features())
    }

    /// Label of every example, as its name.
    fn labels(&self) -> Vec<String> {
        let names = self.inner.label_names();
        self.inner.labels().iter().map(|&y| names[y].clone()).collect()
    }

    fn label_names(&self) -> Vec<String> {
        self.inner.label_names().to_vec()
    }

    /// Seeded random subset of `count` examples.
    fn sample(&self, count: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.sample(count, seed).map_err(to_py)?,
        })
    }

    /// Copy with independent Gaussian noise added to every feature.
    #[pyo3(signature = (sigma, seed, clamp=None))]
    fn with_noise(&self, sigma: f64, seed: u64, clamp: Option<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: eval::add_gaussian_noise_clamped(&self.inner, sigma, seed, clamp).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, dim={}, classes={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.n_classes()
        )
    }
}

#[pyclass(name = "TrainConfig", module = "pymapml", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    tau: f64,
    gamma: f64,
    lambda_: f64,
    delta: f64,
    outer_iters: usize,
    inner_iters: usize,
    latent_em_iters: usize,
    rng_seed: u64,
    active_set_cap: usize,
    tie_tolerance: f64,
}

impl From<&PyTrainConfig> for TrainConfig {
    fn from(c: &PyTrainConfig) -> Self {
        TrainConfig {
            tau: c.tau,
            gamma: c.gamma,
            lambda: c.lambda_,
            delta: c.delta,
            outer_iters: c.outer_iters,
            inner_iters: c.inner_iters,
            latent_em_iters: c.latent_em_iters,
            rng_seed: c.rng_seed,
            active_set_cap: c.active_set_cap,
            tie_tolerance: c.tie_tolerance,
        }
    }
}

#[pymethods]
impl PyTrainConfig {
    /// Keyword arguments override the defaults; `lambda_` is the metric
    /// stage's proximal weight.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let d = TrainConfig::default();
        let mut cfg = Self {
            tau: d.tau,
            gamma: d.gamma,
            lambda_: d.lambda,
            delta: d.delta,
            outer_iters: d.outer_iters,
            inner_iters: d.inner_iters,
            latent_em_iters: d.latent_em_iters,
            rng_seed: d.rng_seed,
            active_set_cap: d.active_set_cap,
            tie_tolerance: d.tie_tolerance,
        };
        if let Some(kwargs) = kwargs {
            for (key, value) in kwargs.iter() {
                let key: String = key.extract()?;
                match key.as_str() {
                    "tau" => cfg.tau = value.extract()?,
                    "gamma" => cfg.gamma = value.extract()?,
                    "lambda_" | "lam" => cfg.lambda_ = value.extract()?,
                    "delta" => cfg.delta = value.extract()?,
                    "outer_iters" => cfg.outer_iters = value.extract()?,
                    "inner_iters" => cfg.inner_iters = value.extract()?,
                    "latent_em_iters" => cfg.latent_em_iters = value.extract()?,
                    "rng_seed" | "seed" => cfg.rng_seed = value.extract()?,
                    "active_set_cap" => cfg.active_set_cap = value.extract()?,
                    "tie_tolerance" => cfg.tie_tolerance = value.extract()?,
                    other => return Err(PyValueError::new_err(format!("unknown option '{other}'"))),
                }
            }
        }
        TrainConfig::from(&cfg).validate().map_err(to_py)?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", TrainConfig::from(self))
    }
}

#[pyclass(name = "TrainResult", module = "pymapml", from_py_object)]
#[derive(Clone)]
struct PyTrainResult {
    inner: TrainResult,
}

#[pymethods]
impl PyTrainResult {
    #[getter]
    fn metric(&self) -> PyMetric {
        PyMetric {
            inner: self.inner.metric.clone(),
        }
    }

    #[getter]
    fn loss_trace(&self) -> Vec<f64> {
        self.inner.loss_trace.clone()
    }

    fn latents(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.latent_model.latents)
    }

    /// Label name of every latent example.
    fn latent_labels(&self) -> Vec<String> {
        let model = &self.inner.latent_model;
        model.latent_labels.iter().map(|&r| model.label_names[r].clone()).collect()
    }

    fn membership(&self) -> Vec<usize> {
        self.inner.latent_model.membership.clone()
    }

    fn cluster_margins(&self) -> Vec<f64> {
        self.inner.latent_model.cluster_margins.clone()
    }

    /// Writes the binary model file and its `.meta` sidecar.
    #[pyo3(signature = (path, config, method="mapml"))]
    fn save(&self, path: &str, config: PyRef<'_, PyTrainConfig>, method: &str) -> PyResult<()> {
        io::save_model(path, &self.inner, &TrainConfig::from(&*config), method).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainResult(latents={}, final_loss={:?})",
            self.inner.latent_model.len(),
            self.inner.loss_trace.last()
        )
    }
}

fn config_or_default(config: Option<PyRef<'_, PyTrainConfig>>) -> TrainConfig {
    config.map_or_else(TrainConfig::default, |c| TrainConfig::from(&*c))
}

/// Alternating training of latent examples and the metric.
#[pyfunction]
#[pyo3(signature = (data, config=None))]
fn train_mapml(py: Python<'_>, data: PyRef<'_, PyDataset>, config: Option<PyRef<'_, PyTrainConfig>>) -> PyResult<PyTrainResult> {
    let cfg = config_or_default(config);
    let data = data.inner.clone();
    let inner = py.detach(|| mapml::train_mapml(&data, &cfg)).map_err(to_py)?;
    Ok(PyTrainResult { inner })
}

/// SGD on uniformly sampled triplets of the original examples.
#[pyfunction]
#[pyo3(signature = (data, config=None))]
fn train_random_triplet_baseline(
    py: Python<'_>,
    data: PyRef<'_, PyDataset>,
    config: Option<PyRef<'_, PyTrainConfig>>,
) -> PyResult<PyTrainResult> {
    let cfg = config_or_default(config);
    let data = data.inner.clone();
    let inner = py
        .detach(|| mapml::train_random_triplet_baseline(&data, &cfg))
        .map_err(to_py)?;
    Ok(PyTrainResult { inner })
}

fn references(refs: &PyDataset, model: Option<&PyTrainResult>) -> PyResult<ReferenceSet> {
    match model {
        Some(m) => ReferenceSet::latent(&m.inner.latent_model).map_err(to_py),
        None => Ok(ReferenceSet::original(&refs.inner)),
    }
}

/// k-NN error of `test` under `metric`. References are the examples of
/// `refs`, or the latent examples of `latents_from` when given.
#[pyfunction]
#[pyo3(signature = (test, refs, metric, k=3, latents_from=None))]
fn evaluate(
    py: Python<'_>,
    test: PyRef<'_, PyDataset>,
    refs: PyRef<'_, PyDataset>,
    metric: PyRef<'_, PyMetric>,
    k: usize,
    latents_from: Option<PyRef<'_, PyTrainResult>>,
) -> PyResult<Py<PyDict>> {
    let reference_set = references(&refs, latents_from.as_deref())?;
    let report = eval::evaluate(&test.inner, &reference_set, &metric.inner, k).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("error_rate", report.error_rate)?;
    out.set_item("errors", report.errors)?;
    out.set_item("k", report.k)?;
    out.set_item("reference_mode", report.reference_mode.to_string())?;
    out.set_item("n_test", report.n_test)?;
    out.set_item("mean_query_time", report.mean_query_time)?;
    Ok(out.unbind())
}

/// Predicted label name for one query point.
#[pyfunction]
#[pyo3(signature = (query, refs, metric, k=3))]
fn knn_predict(query: Vec<f64>, refs: PyRef<'_, PyDataset>, metric: PyRef<'_, PyMetric>, k: usize) -> PyResult<String> {
    let reference_set = ReferenceSet::original(&refs.inner);
    let class = eval::knn_predict((&query[..]).into(), &reference_set, &metric.inner, k).map_err(to_py)?;
    Ok(reference_set.label_names()[class].clone())
}

#[pyfunction]
fn load_idx(images_path: &str, labels_path: &str) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: io::load_idx(images_path, labels_path).map_err(to_py)?,
    })
}

/// Loads the `train` or `test` MNIST split from a directory of IDX files.
#[pyfunction]
#[pyo3(signature = (directory, split="train"))]
fn load_mnist(directory: &str, split: &str) -> PyResult<PyDataset> {
    let split = match split {
        "train" => MnistSplit::Train,
        "test" => MnistSplit::Test,
        other => return Err(PyValueError::new_err(format!("unknown split '{other}'"))),
    };
    Ok(PyDataset {
        inner: io::load_mnist(directory, split).map_err(to_py)?,
    })
}

/// Loads a CSV table; `label_column` is a header name, an index, or None
/// for the last column.
#[pyfunction]
#[pyo3(signature = (path, label_column=None))]
fn load_csv(path: &str, label_column: Option<Bound<'_, PyAny>>) -> PyResult<PyDataset> {
    let column = match label_column {
        None => LabelColumn::Last,
        Some(v) => match v.extract::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(v.extract()?),
        },
    };
    Ok(PyDataset {
        inner: io::load_csv(path, &column).map_err(to_py)?,
    })
}

/// Samples a dataset from random latent examples; returns the dataset and
/// the generating latent examples (list of rows).
#[pyfunction]
#[pyo3(signature = (n_classes=2, latents_per_class=3, dim=5, noise_sigma=0.05, samples_per_latent=100, seed=0))]
fn generate_synthetic(
    n_classes: usize,
    latents_per_class: usize,
    dim: usize,
    noise_sigma: f64,
    samples_per_latent: usize,
    seed: u64,
) -> PyResult<(PyDataset, Vec<Vec<f64>>)> {
    let spec = SyntheticSpec {
        n_classes,
        latents_per_class,
        dim,
        true_latents: None,
        noise_sigma,
        samples_per_latent,
        seed,
    };
    let (data, truth): (Dataset, LatentModel) = io::generate_synthetic(&spec).map_err(to_py)?;
    Ok((PyDataset { inner: data }, to_rows(&truth.latents)))
}

/// Reads a model file; returns the metric, the latent examples and their
/// label names.
#[pyfunction]
fn load_model(path: &str) -> PyResult<(PyMetric, Vec<Vec<f64>>, Vec<String>)> {
    let file = io::load_model(path).map_err(to_py)?;
    let names = file.label_names();
    let labels = file.latent_labels.iter().map(|&r| names[r].clone()).collect();
    Ok((PyMetric { inner: file.metric }, to_rows(&file.latents), labels))
}

/// Names accepted by the benchmark harness.
#[pyfunction]
fn methods() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.name()).collect()
}

#[pymodule]
fn pymapml(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMetric>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(train_mapml, m)?)?;
    m.add_function(wrap_pyfunction!(train_random_triplet_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(knn_predict, m)?)?;
    m.add_function(wrap_pyfunction!(load_idx, m)?)?;
    m.add_function(wrap_pyfunction!(load_mnist, m)?)?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    Ok(())
}
