//! Python bindings for the fraudchain detectors.

use std::path::PathBuf;

use fraudchain::config::{GbmConfig, MarkovConfig, RunConfig};
use fraudchain::data::{read_dataset, split_train_test, write_dataset, ClaimFeature, Dataset, Label};
use fraudchain::eval::{self, ConfusionMatrix};
use fraudchain::gbm::{CategoricalEncoding, CvReport, GbmDetector, TreeSelection};
use fraudchain::markov::{MarkovDetector, ScoringMode};
use fraudchain::pipeline::{self, train_gbm, train_markov};
use fraudchain::synth::{self, GenConfig};
use fraudchain::Error;
use pyo3::exceptions::{PyFileNotFoundError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(e.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn features(names: Option<Vec<String>>, default: &[ClaimFeature]) -> PyResult<Vec<ClaimFeature>> {
    match names {
        None => Ok(default.to_vec()),
        Some(names) => names
            .iter()
            .map(|n| n.parse().map_err(to_py))
            .collect(),
    }
}

fn labels(flags: &[bool]) -> Vec<Label> {
    flags.iter().map(|&f| Label::from_fraud(f)).collect()
}

/// A labelled set of claims.
#[pyclass(name = "Dataset", module = "pyfraudchain", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset { inner: read_dataset(path).map_err(to_py)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_dataset(&self.inner, path).map_err(to_py)
    }

    /// Returns `(train, test)`.
    #[pyo3(signature = (ratio = 0.7, seed = 7))]
    fn split(&self, ratio: f64, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
        let s = split_train_test(&self.inner, ratio, seed).map_err(to_py)?;
        Ok((PyDataset { inner: s.train }, PyDataset { inner: s.test }))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn fraud_count(&self) -> usize {
        self.inner.fraud_count()
    }

    #[getter]
    fn fraud_rate(&self) -> f64 {
        self.inner.fraud_rate()
    }

    #[getter]
    fn provenance(&self) -> String {
        self.inner.provenance.clone()
    }

    /// True for fraudulent claims.
    fn labels(&self) -> Vec<bool> {
        self.inner.records.iter().map(|r| r.label.is_fraud()).collect()
    }

    fn claim_ids(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.claim_id.clone()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, fraud={}, source={:?})",
            self.inner.len(),
            self.inner.fraud_count(),
            self.inner.provenance
        )
    }
}

#[pyfunction]
#[pyo3(signature = (n_claims = 10_000, fraud_rate = 0.0995, signal_strength = 1.5, seed = 7, exact_counts = true))]
fn generate(
    py: Python<'_>,
    n_claims: usize,
    fraud_rate: f64,
    signal_strength: f64,
    seed: u64,
    exact_counts: bool,
) -> PyResult<PyDataset> {
    let cfg = GenConfig {
        n_claims,
        fraud_rate,
        signal_strength,
        seed,
        exact_counts,
        ..GenConfig::default()
    };
    let inner = py.detach(|| synth::generate(&cfg)).map_err(to_py)?;
    Ok(PyDataset { inner })
}

#[pyclass(name = "MarkovDetector", module = "pyfraudchain")]
struct PyMarkov {
    inner: MarkovDetector,
}

#[pymethods]
impl PyMarkov {
    #[staticmethod]
    #[pyo3(signature = (train, features = None, alpha = 1.0, threshold = 0.5, scoring = "state", days_bins = 3, net_bins = 3))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        train: &PyDataset,
        features: Option<Vec<String>>,
        alpha: f64,
        threshold: f64,
        scoring: &str,
        days_bins: usize,
        net_bins: usize,
    ) -> PyResult<Self> {
        let scoring = match scoring {
            "state" => ScoringMode::State,
            "chain" => ScoringMode::Chain,
            other => return Err(PyValueError::new_err(format!("unknown scoring mode `{other}`"))),
        };
        let cfg = MarkovConfig {
            features: self::features(features, &ClaimFeature::MARKOV)?,
            bins: [("days_stayed".to_string(), days_bins), ("net_amount".to_string(), net_bins)].into(),
            alpha,
            threshold,
            scoring,
        };
        let data = &train.inner;
        let inner = py.detach(|| train_markov(data, &cfg)).map_err(to_py)?;
        Ok(PyMarkov { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyMarkov { inner: MarkovDetector::load(path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    /// Fraud probability per claim.
    fn score(&self, py: Python<'_>, data: &PyDataset) -> Vec<f64> {
        py.detach(|| self.inner.score_all(&data.inner.records))
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.model.state_table.len()
    }

    #[getter]
    fn global_prior(&self) -> f64 {
        self.inner.model.global_prior
    }
}

#[pyclass(name = "GbmDetector", module = "pyfraudchain")]
struct PyGbm {
    inner: GbmDetector,
    cv: Option<CvReport>,
}

#[pymethods]
impl PyGbm {
    #[staticmethod]
    #[pyo3(signature = (
        train, features = None, n_trees = 300, max_depth = 5, learning_rate = 0.1, cv_folds = 10,
        min_leaf_count = 10, seed = 7, cross_validate = true, all_trees = false, one_hot = false,
        threshold = 0.5
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        train: &PyDataset,
        features: Option<Vec<String>>,
        n_trees: usize,
        max_depth: usize,
        learning_rate: f64,
        cv_folds: usize,
        min_leaf_count: usize,
        seed: u64,
        cross_validate: bool,
        all_trees: bool,
        one_hot: bool,
        threshold: f64,
    ) -> PyResult<Self> {
        let cfg = GbmConfig {
            features: self::features(features, &ClaimFeature::GBM)?,
            encoding: if one_hot { CategoricalEncoding::OneHot } else { CategoricalEncoding::Ordinal },
            n_trees,
            max_depth,
            learning_rate,
            cv_folds,
            min_leaf_count,
            seed,
            cross_validate,
            tree_selection: if all_trees { TreeSelection::All } else { TreeSelection::Best },
            threshold,
        };
        let data = &train.inner;
        let (inner, cv) = py.detach(|| train_gbm(data, &cfg)).map_err(to_py)?;
        Ok(PyGbm { inner, cv })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyGbm { inner: GbmDetector::load(path).map_err(to_py)?, cv: None })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    fn score(&self, py: Python<'_>, data: &PyDataset) -> Vec<f64> {
        py.detach(|| self.inner.score_all(&data.inner.records))
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.model.trees.len()
    }

    #[getter]
    fn best_iteration(&self) -> usize {
        self.inner.model.best_iteration
    }

    /// Mean training deviance after 0, 1, ... trees.
    #[getter]
    fn train_deviance(&self) -> Vec<f64> {
        self.inner.model.train_deviance.clone()
    }

    /// Mean held-out deviance after 1, 2, ... trees; None without cross-validation.
    #[getter]
    fn cv_deviance(&self) -> Option<Vec<f64>> {
        self.cv.as_ref().map(|cv| cv.mean_deviance.clone())
    }
}

/// `(tp, fp, fn, tn)` for boolean labels and predictions.
#[pyfunction]
fn confusion(labels: Vec<bool>, predictions: Vec<bool>) -> PyResult<(u64, u64, u64, u64)> {
    let cm = eval::confusion(&self::labels(&labels), &self::labels(&predictions)).map_err(to_py)?;
    Ok((cm.tp, cm.fp, cm.fn_, cm.tn))
}

/// Sensitivity, specificity, precision, accuracy and F1; None where undefined.
#[pyfunction]
#[pyo3(name = "metrics")]
fn metrics_py(tp: u64, fp: u64, fn_: u64, tn: u64) -> Vec<(&'static str, Option<f64>)> {
    eval::metrics(&ConfusionMatrix::new(tp, fp, fn_, tn)).named().to_vec()
}

#[pyfunction]
fn auc(labels: Vec<bool>, scores: Vec<f64>) -> PyResult<f64> {
    eval::auc(&self::labels(&labels), &scores).map_err(to_py)
}

/// ROC points as `(fpr, tpr, threshold)`.
#[pyfunction]
fn roc(labels: Vec<bool>, scores: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let curve = eval::roc(&self::labels(&labels), &scores).map_err(to_py)?;
    Ok(curve.points.iter().map(|p| (p.fpr, p.tpr, p.threshold)).collect())
}

/// Runs generate, split, train, evaluate and compare into `out_dir` and
/// returns the comparison as JSON. `config` is an optional TOML document.
#[pyfunction]
#[pyo3(signature = (out_dir, config = None, seed = None))]
fn run_paper(py: Python<'_>, out_dir: PathBuf, config: Option<&str>, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = match config {
        Some(text) => RunConfig::from_toml(text).map_err(to_py)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    let summary = py.detach(|| pipeline::run_paper(&cfg, &out_dir)).map_err(to_py)?;
    Ok(summary.comparison.to_json())
}

#[pymodule]
fn pyfraudchain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyMarkov>()?;
    m.add_class::<PyGbm>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_py, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(run_paper, m)?)?;
    Ok(())
}
