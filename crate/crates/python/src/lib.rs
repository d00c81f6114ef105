//! Python module `mvcontrast`: losses, pair construction, metrics, synthetic
//! data and cross-validation from `mvc-core`.
//!
//! Matrices are lists of rows; labels are 0 (benign) / 1 (malignant).

use std::path::PathBuf;

use mvc_core::dataset::{self, FeatureFormat, SynthConfig};
use mvc_core::evaluation::{self, KnnConfig, PredictionRecord};
use mvc_core::losses::{self, ContrastiveOptions};
use mvc_core::pairing::{self, BatchLabels, PairVariant, ViewMode};
use mvc_core::tensor::{self, Matrix};
use mvc_core::trainer::{self, Method, TrainConfig};
use mvc_core::{Error, Label};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn labels(raw: &[u8]) -> PyResult<Vec<Label>> {
    raw.iter()
        .map(|&v| Label::try_from(v).map_err(to_py))
        .collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn variant(name: &str) -> PyResult<PairVariant> {
    name.parse().map_err(to_py)
}

fn predictions(
    lesion_ids: Vec<String>,
    true_labels: &[u8],
    scores: &[f64],
) -> PyResult<Vec<PredictionRecord>> {
    if lesion_ids.len() != true_labels.len() || scores.len() != true_labels.len() {
        return Err(PyValueError::new_err(
            "lesion_ids, labels and scores must have equal length",
        ));
    }
    let labels = labels(true_labels)?;
    Ok(lesion_ids
        .into_iter()
        .zip(labels)
        .zip(scores)
        .map(|((id, l), &s)| PredictionRecord::new(id, l, s))
        .collect())
}

/// One lesion: an id, a class label and one feature vector per view.
#[pyclass(module = "mvcontrast", from_py_object)]
#[derive(Clone)]
struct LesionRecord {
    inner: dataset::LesionRecord,
}

#[pymethods]
impl LesionRecord {
    #[new]
    fn new(lesion_id: String, label: u8, views: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = dataset::LesionRecord {
            lesion_id,
            label: Label::try_from(label).map_err(to_py)?,
            views,
        };
        dataset::validate_records(std::slice::from_ref(&inner)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lesion_id(&self) -> &str {
        &self.inner.lesion_id
    }

    #[getter]
    fn label(&self) -> u8 {
        self.inner.label.into()
    }

    #[getter]
    fn views(&self) -> Vec<Vec<f64>> {
        self.inner.views.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.views.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "LesionRecord(lesion_id={:?}, label={}, views={}x{})",
            self.inner.lesion_id,
            u8::from(self.inner.label),
            self.inner.views.len(),
            self.inner.view_dim()
        )
    }
}

fn unwrap_records(records: Vec<LesionRecord>) -> Vec<dataset::LesionRecord> {
    records.into_iter().map(|r| r.inner).collect()
}

fn wrap_records(records: Vec<dataset::LesionRecord>) -> Vec<LesionRecord> {
    records
        .into_iter()
        .map(|inner| LesionRecord { inner })
        .collect()
}

/// Threshold metrics, ROC-AUC and inner-lesion MCR for one evaluation.
#[pyclass(module = "mvcontrast", get_all, skip_from_py_object)]
struct MetricsReport {
    auc: Option<f64>,
    acc: Option<f64>,
    sensitivity: Option<f64>,
    precision: Option<f64>,
    specificity: Option<f64>,
    f1: Option<f64>,
    mcr: Option<f64>,
    lesion_acc: Option<f64>,
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    json: String,
}

#[pymethods]
impl MetricsReport {
    fn to_json(&self) -> &str {
        &self.json
    }

    fn __repr__(&self) -> String {
        format!("MetricsReport({})", self.json)
    }
}

impl MetricsReport {
    fn from_core(m: evaluation::MetricsReport) -> PyResult<Self> {
        let json = serde_json::to_string(&m).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            auc: m.auc,
            acc: m.acc,
            sensitivity: m.sensitivity,
            precision: m.precision,
            specificity: m.specificity,
            f1: m.f1,
            mcr: m.mcr,
            lesion_acc: m.lesion_acc,
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
            json,
        })
    }
}

/// Step-decayed learning rate for a 0-based epoch.
#[pyfunction]
#[pyo3(signature = (epoch, base_lr = 1e-4))]
fn lr_schedule(epoch: usize, base_lr: f64) -> f64 {
    tensor::lr_schedule(epoch, base_lr)
}

/// `(positives, negatives)`: candidate indices per anchor.
type IndexSets = (Vec<Vec<usize>>, Vec<Vec<usize>>);

/// Positive and negative candidate index sets for every anchor.
#[pyfunction]
#[pyo3(signature = (variant_name, lesion_ids, class_labels, single_view = false))]
fn build_pairs(
    variant_name: &str,
    lesion_ids: Vec<usize>,
    class_labels: Vec<u8>,
    single_view: bool,
) -> PyResult<IndexSets> {
    let batch = BatchLabels::new(lesion_ids, labels(&class_labels)?).map_err(to_py)?;
    let mode = if single_view {
        ViewMode::Single
    } else {
        ViewMode::Dual
    };
    let sets = pairing::build_pairs_with_mode(variant(variant_name)?, &batch, mode);
    Ok((sets.positives, sets.negatives))
}

/// Contrastive loss of `anchors` against `candidates` (raw embeddings, one row
/// per image). Returns `(value, grad_anchors, grad_candidates, per_anchor)`.
#[allow(clippy::type_complexity)]
#[pyfunction]
#[pyo3(signature = (anchors, candidates, variant_name, lesion_ids, class_labels, temperature = 1.0, normalize_positives = false))]
fn contrastive_loss(
    anchors: Vec<Vec<f64>>,
    candidates: Vec<Vec<f64>>,
    variant_name: &str,
    lesion_ids: Vec<usize>,
    class_labels: Vec<u8>,
    temperature: f64,
    normalize_positives: bool,
) -> PyResult<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let batch = BatchLabels::new(lesion_ids, labels(&class_labels)?).map_err(to_py)?;
    let pairs = pairing::build_pairs(variant(variant_name)?, &batch);
    let options = ContrastiveOptions {
        temperature,
        normalize_positives,
    };
    let out = losses::contrastive_loss(&matrix(anchors)?, &matrix(candidates)?, &pairs, &options)
        .map_err(to_py)?;
    let rows = |m: Option<Matrix>| m.map(|m| m.to_rows()).unwrap_or_default();
    Ok((
        out.value,
        rows(out.grad_anchors),
        rows(out.grad_candidates),
        out.per_anchor,
    ))
}

/// Mean binary cross-entropy of probabilities; returns `(value, dL/dlogit)`.
#[pyfunction]
fn binary_cross_entropy(scores: Vec<f64>, class_labels: Vec<u8>) -> PyResult<(f64, Vec<f64>)> {
    let out = losses::binary_cross_entropy(&scores, &labels(&class_labels)?).map_err(to_py)?;
    Ok((out.value, out.grad_logits.unwrap_or_default()))
}

/// ROC-AUC (Mann–Whitney, ties count one half).
#[pyfunction]
fn roc_auc(scores: Vec<f64>, class_labels: Vec<u8>) -> PyResult<f64> {
    evaluation::roc_auc_scores(&scores, &labels(&class_labels)?).map_err(to_py)
}

/// Inner-lesion mis-classification rate over per-image predictions.
#[pyfunction]
#[pyo3(signature = (lesion_ids, class_labels, scores, threshold = 0.5))]
fn mcr(
    lesion_ids: Vec<String>,
    class_labels: Vec<u8>,
    scores: Vec<f64>,
    threshold: f64,
) -> PyResult<f64> {
    evaluation::mcr(&predictions(lesion_ids, &class_labels, &scores)?, threshold).map_err(to_py)
}

/// All metrics for per-image predictions.
#[pyfunction]
#[pyo3(signature = (lesion_ids, class_labels, scores, threshold = 0.5))]
fn evaluate(
    lesion_ids: Vec<String>,
    class_labels: Vec<u8>,
    scores: Vec<f64>,
    threshold: f64,
) -> PyResult<MetricsReport> {
    let records = predictions(lesion_ids, &class_labels, &scores)?;
    MetricsReport::from_core(evaluation::evaluate(&records, threshold).map_err(to_py)?)
}

/// Weighted KNN malignancy score per query row.
#[pyfunction]
#[pyo3(signature = (reference, reference_labels, queries, k = 200, temperature = 0.07))]
fn weighted_knn_scores(
    reference: Vec<Vec<f64>>,
    reference_labels: Vec<u8>,
    queries: Vec<Vec<f64>>,
    k: usize,
    temperature: f64,
) -> PyResult<Vec<f64>> {
    evaluation::weighted_knn_scores(
        &matrix(reference)?,
        &labels(&reference_labels)?,
        &matrix(queries)?,
        &KnnConfig { k, temperature },
    )
    .map_err(to_py)
}

/// `[(k, auc), ...]` of the weighted KNN probe.
#[pyfunction]
#[pyo3(signature = (reference, reference_labels, queries, query_labels, ks, temperature = 0.07))]
fn knn_auc_sweep(
    reference: Vec<Vec<f64>>,
    reference_labels: Vec<u8>,
    queries: Vec<Vec<f64>>,
    query_labels: Vec<u8>,
    ks: Vec<usize>,
    temperature: f64,
) -> PyResult<Vec<(usize, f64)>> {
    let points = evaluation::knn_auc_sweep(
        &matrix(reference)?,
        &labels(&reference_labels)?,
        &matrix(queries)?,
        &labels(&query_labels)?,
        &ks,
        temperature,
    )
    .map_err(to_py)?;
    Ok(points.into_iter().map(|p| (p.k, p.auc)).collect())
}

/// Synthetic multi-view lesions; unspecified settings use the defaults.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (
    seed = 0, benign = 100, malignant = 100, min_views = 2, max_views = 6,
    class_separation = None, view_noise_sigma = None, latent_dim = None, view_dim = None,
))]
fn generate_synthetic(
    seed: u64,
    benign: usize,
    malignant: usize,
    min_views: usize,
    max_views: usize,
    class_separation: Option<f64>,
    view_noise_sigma: Option<f64>,
    latent_dim: Option<usize>,
    view_dim: Option<usize>,
) -> PyResult<Vec<LesionRecord>> {
    let d = SynthConfig::default();
    let config = SynthConfig {
        seed,
        lesions_per_class: (benign, malignant),
        views_per_lesion: (min_views, max_views),
        class_separation: class_separation.unwrap_or(d.class_separation),
        view_noise_sigma: view_noise_sigma.unwrap_or(d.view_noise_sigma),
        latent_dim: latent_dim.unwrap_or(d.latent_dim),
        view_dim: view_dim.unwrap_or(d.view_dim),
        ..d
    };
    Ok(wrap_records(
        dataset::generate_synthetic(&config).map_err(to_py)?,
    ))
}

/// Writes `manifest.csv` and `features/` under `directory`; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (records, directory, binary = false))]
fn save_manifest(
    records: Vec<LesionRecord>,
    directory: PathBuf,
    binary: bool,
) -> PyResult<PathBuf> {
    let format = if binary {
        FeatureFormat::Binary
    } else {
        FeatureFormat::Text
    };
    dataset::save_manifest(&unwrap_records(records), &directory, format).map_err(to_py)
}

/// Loads a dataset from a manifest CSV or its directory.
#[pyfunction]
fn load_manifest(path: PathBuf) -> PyResult<Vec<LesionRecord>> {
    Ok(wrap_records(dataset::load_manifest(&path).map_err(to_py)?))
}

/// SHA-256 over ids, labels and feature bits.
#[pyfunction]
fn fingerprint(records: Vec<LesionRecord>) -> String {
    dataset::fingerprint(&unwrap_records(records))
}

/// Default training configuration as JSON.
#[pyfunction]
fn default_train_config() -> PyResult<String> {
    serde_json::to_string(&TrainConfig::default()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Lesion-level k-fold cross-validation of `method` (`"baseline"`, `"LR"`,
/// `"IR"`, ...). `config` is a JSON object overriding default training
/// settings. Returns the run result as JSON.
#[pyfunction]
#[pyo3(signature = (records, method = "LR", folds = 5, config = None))]
fn cross_validate(
    py: Python<'_>,
    records: Vec<LesionRecord>,
    method: &str,
    folds: usize,
    config: Option<&str>,
) -> PyResult<String> {
    let method: Method = method.parse().map_err(to_py)?;
    let mut base = serde_json::to_value(TrainConfig::default())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(text) = config {
        let overrides: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
        let obj = overrides
            .as_object()
            .ok_or_else(|| PyValueError::new_err("config must be a JSON object"))?;
        for (k, v) in obj {
            base[k] = v.clone();
        }
    }
    let cfg: TrainConfig =
        serde_json::from_value(base).map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
    let records = unwrap_records(records);
    let label = method.to_string();
    let run = py
        .detach(|| trainer::cross_validate_labeled(&records, &method.apply(&cfg), folds, &label))
        .map_err(to_py)?;
    serde_json::to_string(&run).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn mvcontrast(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<LesionRecord>()?;
    m.add_class::<MetricsReport>()?;
    m.add_function(wrap_pyfunction!(lr_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(build_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_loss, m)?)?;
    m.add_function(wrap_pyfunction!(binary_cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(mcr, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_knn_scores, m)?)?;
    m.add_function(wrap_pyfunction!(knn_auc_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(save_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(default_train_config, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    Ok(())
}
