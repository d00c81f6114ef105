//! Joint classification + contrastive training, cross-validation and the
//! ablation drivers.
//!
//! Per batch: sample lesions and views, augment every image twice, encode
//! both views, L2-normalise, apply the contrastive loss between first-view
//! anchors and second-view candidates, apply cross-entropy to the head
//! output of the first view, and back-propagate the weighted sum through the
//! shared encoder in one pass before an Adam step.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    augment_view, fingerprint, total_views, validate_records, AugmentConfig, LesionRecord,
};
use crate::evaluation::{evaluate, knn_auc_sweep, KnnPoint, MetricsReport, PredictionRecord};
use crate::losses::{
    binary_cross_entropy, contrastive_loss, joint_loss, ContrastiveOptions, JointLossConfig,
    LossOutput,
};
use crate::pairing::{build_pairs_with_mode, BatchLabels, PairVariant, ViewMode};
use crate::rng::{derive_seed, derived, seeded, Rng};
use crate::sampling::{kfold_split, sample_batch, BatchSpec};
use crate::tensor::{
    adam_step, head_backward, head_forward, l2_normalize_rows, l2_normalize_rows_backward,
    lr_schedule, mlp_backward, mlp_forward, sigmoid, AdamState, EncoderParams, Matrix,
};
use crate::{Error, Label, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: PairVariant,
    /// Weight of the contrastive term.
    pub alpha: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub base_lr: f64,
    pub batch: BatchSpec,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Two augmentations per image (anchors vs. candidates). When off,
    /// anchors and candidates are the same embeddings.
    pub dual_view: bool,
    pub normalize_positives: bool,
    /// When off, the second view and the contrastive loss are never computed.
    pub contrastive: bool,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub threshold: f64,
    pub knn_ks: Vec<usize>,
    pub knn_temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: PairVariant::Lr,
            alpha: 0.5,
            temperature: 1.0,
            epochs: 200,
            base_lr: 1e-4,
            batch: BatchSpec::default(),
            augment: AugmentConfig::default(),
            seed: 0,
            dual_view: true,
            normalize_positives: false,
            contrastive: true,
            hidden: vec![64, 32],
            embed_dim: 16,
            threshold: 0.5,
            knn_ks: vec![1, 5, 10, 20, 50, 100],
            knn_temperature: 0.07,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail(format!("base_lr must be > 0, got {}", self.base_lr));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            ));
        }
        if !(self.knn_temperature > 0.0 && self.knn_temperature.is_finite()) {
            return fail(format!(
                "knn_temperature must be > 0, got {}",
                self.knn_temperature
            ));
        }
        if self.knn_ks.contains(&0) {
            return fail("knn_ks entries must be >= 1".into());
        }
        if self.embed_dim == 0 || self.hidden.contains(&0) {
            return fail("encoder dimensions must be >= 1".into());
        }
        self.batch.validate()?;
        self.augment.validate()
    }

    fn view_mode(&self) -> ViewMode {
        if self.dual_view {
            ViewMode::Dual
        } else {
            ViewMode::Single
        }
    }

    fn contrastive_options(&self) -> ContrastiveOptions {
        ContrastiveOptions {
            temperature: self.temperature,
            normalize_positives: self.normalize_positives,
        }
    }
}

/// A row of a comparison table: classification only, or with a contrastive variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Baseline,
    Contrastive(PairVariant),
}

impl Method {
    /// Baseline sets α = 0 and skips the contrastive path entirely, which
    /// yields the same parameter trajectory as α = 0 with it enabled.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Method::Baseline => {
                c.alpha = 0.0;
                c.contrastive = false;
            }
            Method::Contrastive(v) => {
                c.variant = v;
                c.contrastive = true;
            }
        }
        c
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Baseline => f.write_str("Baseline"),
            Method::Contrastive(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("baseline") {
            Ok(Method::Baseline)
        } else {
            s.parse().map(Method::Contrastive)
        }
    }
}

/// Mean losses over the batches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub joint: f64,
    pub classification: f64,
    pub contrastive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: EncoderParams,
    pub loss_curve: Vec<EpochLoss>,
    /// Anchors skipped for lack of a positive (single-view mode only).
    pub skipped_anchors: usize,
}

/// Per-step losses handed to a training observer.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub epoch: usize,
    pub batch: usize,
    pub joint: f64,
    pub classification: f64,
    pub contrastive: f64,
}

struct StepOutput {
    cls: f64,
    con: f64,
    joint: f64,
    skipped: usize,
}

/// Trains an encoder and head on the given lesions.
pub fn train_one_fold(records: &[LesionRecord], config: &TrainConfig) -> Result<TrainedModel> {
    train_observed(records, config, |_, _| {})
}

/// [`train_one_fold`], calling `observer` with the parameters after every Adam step.
pub fn train_observed<F>(
    records: &[LesionRecord],
    config: &TrainConfig,
    mut observer: F,
) -> Result<TrainedModel>
where
    F: FnMut(&StepInfo, &EncoderParams),
{
    config.validate()?;
    let dim = validate_records(records)?;
    if records.len() < config.batch.groups_per_batch {
        return Err(Error::InsufficientData(format!(
            "{} training lesions, batch needs {}",
            records.len(),
            config.batch.groups_per_batch
        )));
    }
    let mut init_rng = derived(config.seed, 0);
    let mut sample_rng = derived(config.seed, 1);
    let mut aug_rng_a = derived(config.seed, 2);
    let mut aug_rng_b = derived(config.seed, 3);

    let mut params = EncoderParams::init(dim, &config.hidden, config.embed_dim, &mut init_rng)?;
    let mut adam = AdamState::new(&params);
    let view_counts: Vec<usize> = records.iter().map(|r| r.views.len()).collect();
    let batches = config.batch.batches_per_epoch(total_views(records));

    let mut curve = Vec::with_capacity(config.epochs);
    let mut skipped_total = 0;
    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config.base_lr);
        let (mut joint_sum, mut cls_sum, mut con_sum) = (0.0, 0.0, 0.0);
        for batch in 0..batches {
            let entries = sample_batch(&view_counts, &config.batch, &mut sample_rng)?;
            let lesion_ids: Vec<usize> = entries.iter().map(|e| e.lesion).collect();
            let labels: Vec<Label> = entries.iter().map(|e| records[e.lesion].label).collect();
            let augment = |rng: &mut Rng| -> Result<Matrix> {
                let rows: Vec<Vec<f64>> = entries
                    .iter()
                    .map(|e| augment_view(&records[e.lesion].views[e.view], &config.augment, rng))
                    .collect();
                Matrix::from_rows(&rows)
            };
            let view_a = augment(&mut aug_rng_a)?;
            let view_b = if config.contrastive && config.dual_view {
                Some(augment(&mut aug_rng_b)?)
            } else {
                None
            };
            let batch_labels = BatchLabels::new(lesion_ids, labels)?;
            let (grads, out) =
                match batch_gradients(&params, &view_a, view_b.as_ref(), &batch_labels, config) {
                    Err(Error::DegenerateEmbedding { norm, .. }) if !norm.is_finite() => {
                        let nan = StepOutput {
                            cls: f64::NAN,
                            con: f64::NAN,
                            joint: f64::NAN,
                            skipped: 0,
                        };
                        return Err(divergence(epoch, batch, &nan, &params));
                    }
                    other => other?,
                };
            if !out.joint.is_finite() || !grads.is_finite() {
                return Err(divergence(epoch, batch, &out, &params));
            }
            adam_step(&mut params, &grads, &mut adam, lr)?;
            if !params.is_finite() {
                return Err(divergence(epoch, batch, &out, &params));
            }
            joint_sum += out.joint;
            cls_sum += out.cls;
            con_sum += out.con;
            skipped_total += out.skipped;
            observer(
                &StepInfo {
                    epoch,
                    batch,
                    joint: out.joint,
                    classification: out.cls,
                    contrastive: out.con,
                },
                &params,
            );
        }
        let n = batches as f64;
        curve.push(EpochLoss {
            epoch,
            joint: joint_sum / n,
            classification: cls_sum / n,
            contrastive: con_sum / n,
        });
    }
    Ok(TrainedModel {
        params,
        loss_curve: curve,
        skipped_anchors: skipped_total,
    })
}

fn divergence(epoch: usize, batch: usize, out: &StepOutput, params: &EncoderParams) -> Error {
    let max_abs = params.flatten().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Error::Divergence {
        epoch,
        batch,
        snapshot: format!(
            "joint={} cls={} con={} max|param|={max_abs}",
            out.joint, out.cls, out.con
        ),
    }
}

/// Joint-loss gradient of all parameters for one batch.
fn batch_gradients(
    params: &EncoderParams,
    view_a: &Matrix,
    view_b: Option<&Matrix>,
    labels: &BatchLabels,
    config: &TrainConfig,
) -> Result<(EncoderParams, StepOutput)> {
    let (emb_a, cache_a) = mlp_forward(params, view_a)?;
    let logits = head_forward(params, &emb_a)?;
    let scores: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let cls = binary_cross_entropy(&scores, labels.class_labels())?;
    let grad_logits = cls
        .grad_logits
        .as_deref()
        .expect("cross-entropy has logit gradient");
    let (head_grad, mut grad_emb_a) = head_backward(params, &emb_a, grad_logits)?;

    let mut grads;
    let (con_value, joint_value, skipped);
    if config.contrastive {
        let joint_cfg = JointLossConfig {
            alpha: config.alpha,
            temperature: config.temperature,
        };
        let pairs = build_pairs_with_mode(config.variant, labels, config.view_mode());
        let unit_a = l2_normalize_rows(&emb_a)?;
        let second = match view_b {
            Some(vb) => {
                let (emb_b, cache_b) = mlp_forward(params, vb)?;
                let unit_b = l2_normalize_rows(&emb_b)?;
                Some((emb_b, cache_b, unit_b))
            }
            None => None,
        };
        let candidates = second.as_ref().map_or(&unit_a, |s| &s.2);
        let con = contrastive_loss(&unit_a, candidates, &pairs, &config.contrastive_options())?;
        let joint: LossOutput = joint_loss(&cls, &con, &joint_cfg);
        let mut grad_unit_a = joint.grad_anchors.expect("contrastive anchor gradient");
        let grad_unit_cand = joint
            .grad_candidates
            .expect("contrastive candidate gradient");
        match &second {
            Some((emb_b, cache_b, unit_b)) => {
                grad_emb_a.add_assign(&l2_normalize_rows_backward(
                    &emb_a,
                    &unit_a,
                    &grad_unit_a,
                )?)?;
                let grad_emb_b = l2_normalize_rows_backward(emb_b, unit_b, &grad_unit_cand)?;
                grads = mlp_backward(params, &cache_a, &grad_emb_a)?.0;
                grads.accumulate(&mlp_backward(params, cache_b, &grad_emb_b)?.0)?;
            }
            None => {
                grad_unit_a.add_assign(&grad_unit_cand)?;
                grad_emb_a.add_assign(&l2_normalize_rows_backward(
                    &emb_a,
                    &unit_a,
                    &grad_unit_a,
                )?)?;
                grads = mlp_backward(params, &cache_a, &grad_emb_a)?.0;
            }
        }
        con_value = con.value;
        joint_value = joint.value;
        skipped = con.skipped_anchors;
    } else {
        grads = mlp_backward(params, &cache_a, &grad_emb_a)?.0;
        con_value = 0.0;
        joint_value = cls.value;
        skipped = 0;
    }
    *grads.head_mut() = head_grad;
    Ok((
        grads,
        StepOutput {
            cls: cls.value,
            con: con_value,
            joint: joint_value,
            skipped,
        },
    ))
}

/// Encodes every view of the given lesions without augmentation.
///
/// Returns raw embeddings plus, per row, the lesion id and label.
pub fn embed_records(
    params: &EncoderParams,
    records: &[LesionRecord],
) -> Result<(Matrix, Vec<(String, Label)>)> {
    let rows: Vec<&[f64]> = records
        .iter()
        .flat_map(|r| r.views.iter().map(Vec::as_slice))
        .collect();
    let meta = records
        .iter()
        .flat_map(|r| r.views.iter().map(move |_| (r.lesion_id.clone(), r.label)))
        .collect();
    let (emb, _) = mlp_forward(params, &Matrix::from_rows(&rows)?)?;
    Ok((emb, meta))
}

/// Per-image malignancy predictions without augmentation.
pub fn predict(params: &EncoderParams, records: &[LesionRecord]) -> Result<Vec<PredictionRecord>> {
    let (emb, meta) = embed_records(params, records)?;
    let logits = head_forward(params, &emb)?;
    Ok(meta
        .into_iter()
        .zip(logits)
        .map(|((id, label), z)| PredictionRecord::new(id, label, sigmoid(z)))
        .collect())
}

/// k-vs-AUC of the weighted KNN probe, with `reference` lesions as the
/// neighbour pool and `queries` as the evaluated images. Values of `ks`
/// larger than the reference set are dropped.
pub fn knn_probe(
    params: &EncoderParams,
    reference: &[LesionRecord],
    queries: &[LesionRecord],
    ks: &[usize],
    temperature: f64,
) -> Result<Vec<KnnPoint>> {
    let (ref_emb, ref_meta) = embed_records(params, reference)?;
    let (q_emb, q_meta) = embed_records(params, queries)?;
    let ref_labels: Vec<Label> = ref_meta.iter().map(|m| m.1).collect();
    let q_labels: Vec<Label> = q_meta.iter().map(|m| m.1).collect();
    let ks: Vec<usize> = ks
        .iter()
        .copied()
        .filter(|&k| k <= ref_emb.rows())
        .collect();
    knn_auc_sweep(
        &l2_normalize_rows(&ref_emb)?,
        &ref_labels,
        &l2_normalize_rows(&q_emb)?,
        &q_labels,
        &ks,
        temperature,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_lesions: usize,
    pub test_lesions: usize,
    pub test_images: usize,
    pub metrics: MetricsReport,
    pub knn: Vec<KnnPoint>,
    pub loss_curve: Vec<EpochLoss>,
    pub skipped_anchors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub config: TrainConfig,
    pub dataset_fingerprint: String,
    pub fold_count: usize,
    pub folds: Vec<FoldReport>,
    /// Mean over folds per metric; `None` if any fold left the metric undefined.
    pub mean: BTreeMap<String, Option<f64>>,
    /// Population standard deviation over folds per metric.
    pub std: BTreeMap<String, Option<f64>>,
    /// KNN AUC averaged over folds, for the k values every fold could use.
    pub knn_mean: Vec<KnnPoint>,
    pub notes: Vec<String>,
}

impl RunResult {
    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        self.mean.get(metric).copied().flatten()
    }

    pub fn std_of(&self, metric: &str) -> Option<f64> {
        self.std.get(metric).copied().flatten()
    }
}

fn mean_std(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let Some(vals) = values.iter().copied().collect::<Option<Vec<f64>>>() else {
        return (None, None);
    };
    if vals.is_empty() {
        return (None, None);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn evaluate_fold(
    fold: usize,
    train: &[LesionRecord],
    test: &[LesionRecord],
    config: &TrainConfig,
) -> Result<FoldReport> {
    let mut fold_config = config.clone();
    fold_config.seed = derive_seed(config.seed, fold as u64 + 1);
    let model = train_one_fold(train, &fold_config)?;
    let predictions = predict(&model.params, test)?;
    let metrics = evaluate(&predictions, config.threshold)?;
    let knn = knn_probe(
        &model.params,
        train,
        test,
        &config.knn_ks,
        config.knn_temperature,
    )?;
    Ok(FoldReport {
        fold,
        train_lesions: train.len(),
        test_lesions: test.len(),
        test_images: predictions.len(),
        metrics,
        knn,
        loss_curve: model.loss_curve,
        skipped_anchors: model.skipped_anchors,
    })
}

/// Lesion-level k-fold cross-validation: train on `k - 1` folds, evaluate on
/// the held-out fold, aggregate mean and standard deviation.
pub fn cross_validate(
    records: &[LesionRecord],
    config: &TrainConfig,
    fold_count: usize,
) -> Result<RunResult> {
    cross_validate_labeled(records, config, fold_count, "run")
}

pub fn cross_validate_labeled(
    records: &[LesionRecord],
    config: &TrainConfig,
    fold_count: usize,
    label: &str,
) -> Result<RunResult> {
    config.validate()?;
    if fold_count < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {fold_count}"
        )));
    }
    validate_records(records)?;
    let ids: Vec<&str> = records.iter().map(|r| r.lesion_id.as_str()).collect();
    let split = kfold_split(&ids, fold_count, &mut seeded(config.seed))?;

    let folds: Vec<FoldReport> = (0..fold_count)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<LesionRecord>, Vec<LesionRecord>) = records
                .iter()
                .cloned()
                .partition(|r| split.fold_of(&r.lesion_id) == Some(fold));
            let train_ids: HashSet<&str> = train.iter().map(|r| r.lesion_id.as_str()).collect();
            if test
                .iter()
                .any(|r| train_ids.contains(r.lesion_id.as_str()))
            {
                return Err(Error::DataIntegrity(format!(
                    "fold {fold}: lesion in both splits"
                )));
            }
            evaluate_fold(fold, &train, &test, config)
        })
        .collect::<Result<_>>()?;

    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (i, name) in MetricsReport::METRIC_NAMES.iter().enumerate() {
        let values: Vec<Option<f64>> = folds.iter().map(|f| f.metrics.metric_values()[i]).collect();
        let (m, s) = mean_std(&values);
        mean.insert(name.to_string(), m);
        std.insert(name.to_string(), s);
    }
    let knn_mean = config
        .knn_ks
        .iter()
        .filter_map(|&k| {
            let aucs: Vec<f64> = folds
                .iter()
                .filter_map(|f| f.knn.iter().find(|p| p.k == k).map(|p| p.auc))
                .collect();
            (aucs.len() == folds.len()).then(|| KnnPoint {
                k,
                auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
            })
        })
        .collect();

    Ok(RunResult {
        label: label.to_string(),
        config: config.clone(),
        dataset_fingerprint: fingerprint(records),
        fold_count,
        folds,
        mean,
        std,
        knn_mean,
        notes: vec!["negatives are drawn from the current mini-batch only".into()],
    })
}

/// Rows of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub title: String,
    pub rows: Vec<RunResult>,
}

impl ComparisonTable {
    pub fn row(&self, label: &str) -> Option<&RunResult> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Cross-validates each method on the same data and folds.
pub fn compare_methods(
    records: &[LesionRecord],
    base: &TrainConfig,
    methods: &[Method],
    fold_count: usize,
) -> Result<ComparisonTable> {
    let rows = methods
        .iter()
        .map(|m| cross_validate_labeled(records, &m.apply(base), fold_count, &m.to_string()))
        .collect::<Result<_>>()?;
    Ok(ComparisonTable {
        title: "Benign/malignant classification with different auxiliary tasks".into(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AblationAxis {
    /// The four negative-set settings of the lesion variant.
    Negatives,
    /// Contrastive weights.
    Alpha(Vec<f64>),
}

impl AblationAxis {
    pub const DEFAULT_ALPHAS: [f64; 4] = [0.1, 0.2, 0.5, 1.0];

    pub fn default_alpha() -> Self {
        AblationAxis::Alpha(Self::DEFAULT_ALPHAS.to_vec())
    }

    pub const NEGATIVE_VARIANTS: [PairVariant; 4] = [
        PairVariant::LrMinusAll,
        PairVariant::LrMinusSc,
        PairVariant::LrMinusDc,
        PairVariant::Lr,
    ];
}

/// One cross-validated row per axis setting.
pub fn run_ablation(
    records: &[LesionRecord],
    base: &TrainConfig,
    axis: &AblationAxis,
    fold_count: usize,
) -> Result<ComparisonTable> {
    let settings: Vec<(String, TrainConfig)> = match axis {
        AblationAxis::Negatives => AblationAxis::NEGATIVE_VARIANTS
            .iter()
            .map(|&v| (v.to_string(), Method::Contrastive(v).apply(base)))
            .collect(),
        AblationAxis::Alpha(alphas) => {
            if alphas.is_empty() {
                return Err(Error::Config("alpha axis needs at least one value".into()));
            }
            alphas
                .iter()
                .map(|&a| {
                    let mut c = base.clone();
                    c.alpha = a;
                    c.contrastive = true;
                    (format!("{a}"), c)
                })
                .collect()
        }
    };
    let title = match axis {
        AblationAxis::Negatives => "Ablation on negative samples".to_string(),
        AblationAxis::Alpha(_) => {
            format!("Ablation on contrastive weight alpha ({})", base.variant)
        }
    };
    let rows = settings
        .iter()
        .map(|(label, cfg)| cross_validate_labeled(records, cfg, fold_count, label))
        .collect::<Result<_>>()?;
    Ok(ComparisonTable { title, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig};

    fn small_data(seed: u64) -> Vec<LesionRecord> {
        generate_synthetic(&SynthConfig {
            lesions_per_class: (10, 10),
            views_per_lesion: (2, 4),
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch: BatchSpec::new(4, 4).unwrap(),
            hidden: vec![12],
            embed_dim: 6,
            base_lr: 1e-3,
            knn_ks: vec![1, 3],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_epoch_gives_one_loss_entry() {
        let data = small_data(0);
        let model = train_one_fold(
            &data[..8],
            &TrainConfig {
                epochs: 1,
                ..quick(1)
            },
        )
        .unwrap();
        assert_eq!(model.loss_curve.len(), 1);
        assert!(model.loss_curve[0].joint.is_finite());
    }

    #[test]
    fn joint_loss_is_cls_plus_weighted_con() {
        let data = small_data(1);
        let mut steps = Vec::new();
        train_observed(&data, &quick(1), |s, _| steps.push(*s)).unwrap();
        assert!(!steps.is_empty());
        for s in steps {
            assert!((s.joint - (s.classification + 0.5 * s.contrastive)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_view_and_normalized_variants_train() {
        let data = small_data(2);
        for (dual, norm) in [(false, false), (true, true)] {
            let cfg = TrainConfig {
                dual_view: dual,
                normalize_positives: norm,
                ..quick(2)
            };
            let m = train_one_fold(&data, &cfg).unwrap();
            assert_eq!(m.loss_curve.len(), 2);
        }
        let ir_single = TrainConfig {
            dual_view: false,
            variant: PairVariant::Ir,
            ..quick(1)
        };
        // every anchor lacks a positive in single-view IR
        let m = train_one_fold(&data, &ir_single).unwrap();
        assert!(m.skipped_anchors > 0);
    }

    #[test]
    fn too_few_lesions_or_bad_config_fail() {
        let data = small_data(3);
        assert!(matches!(
            train_one_fold(&data[..3], &quick(1)),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            train_one_fold(
                &data,
                &TrainConfig {
                    epochs: 0,
                    ..quick(1)
                }
            ),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            cross_validate(&data, &quick(1), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let data = small_data(4);
        let cfg = TrainConfig {
            base_lr: 1e300,
            ..quick(3)
        };
        match train_one_fold(&data, &cfg) {
            Err(Error::Divergence { snapshot, .. }) => assert!(snapshot.contains("joint")),
            other => panic!("expected divergence, got {:?}", other.map(|m| m.loss_curve)),
        }
    }

    #[test]
    fn cross_validation_structure() {
        let data = small_data(5);
        let r = cross_validate(&data, &quick(2), 4).unwrap();
        assert_eq!(r.folds.len(), 4);
        assert_eq!(
            r.folds.iter().map(|f| f.test_lesions).sum::<usize>(),
            data.len()
        );
        assert_eq!(r.mean.len(), MetricsReport::METRIC_NAMES.len());
        assert!(r.mean_of("acc").is_some());
        assert_eq!(
            r.knn_mean.iter().map(|p| p.k).collect::<Vec<_>>(),
            vec![1, 3]
        );
    }

    #[test]
    fn method_parsing_and_application() {
        assert_eq!("baseline".parse::<Method>().unwrap(), Method::Baseline);
        assert_eq!(
            "IR".parse::<Method>().unwrap(),
            Method::Contrastive(PairVariant::Ir)
        );
        let b = Method::Baseline.apply(&TrainConfig::default());
        assert_eq!((b.alpha, b.contrastive), (0.0, false));
    }

    #[test]
    fn mean_std_requires_every_fold() {
        assert_eq!(mean_std(&[Some(1.0), Some(3.0)]), (Some(2.0), Some(1.0)));
        assert_eq!(mean_std(&[Some(1.0), None]), (None, None));
    }
}
