//! Classification metrics, inner-lesion misclassification rate and the
//! weighted k-nearest-neighbour embedding probe.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tensor::{l2_normalize_rows, Matrix};
use crate::{Error, Label, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Per-image classification output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub lesion_id: String,
    pub true_label: Label,
    /// Malignancy probability.
    pub score: f64,
}

impl PredictionRecord {
    pub fn new(lesion_id: impl Into<String>, true_label: Label, score: f64) -> Self {
        Self {
            lesion_id: lesion_id.into(),
            true_label,
            score,
        }
    }

    pub fn predicted(&self, threshold: f64) -> Label {
        if self.score >= threshold {
            Label::Malignant
        } else {
            Label::Benign
        }
    }

    pub fn is_correct(&self, threshold: f64) -> bool {
        self.predicted(threshold) == self.true_label
    }
}

/// Metrics of one evaluation run. `None` marks a metric whose denominator
/// was zero (or, for `auc`, a single-class evaluation set).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub acc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub mcr: Option<f64>,
    /// Lesion-level accuracy after majority voting over views. Not one of the
    /// per-image metrics; reported alongside them.
    pub lesion_acc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricsReport {
    /// Metric columns in table order.
    pub const METRIC_NAMES: [&'static str; 8] = [
        "auc",
        "acc",
        "sensitivity",
        "precision",
        "specificity",
        "f1",
        "mcr",
        "lesion_acc",
    ];

    pub fn metric_values(&self) -> [Option<f64>; 8] {
        [
            self.auc,
            self.acc,
            self.sensitivity,
            self.precision,
            self.specificity,
            self.f1,
            self.mcr,
            self.lesion_acc,
        ]
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        Self::METRIC_NAMES
            .iter()
            .position(|&n| n == name)
            .and_then(|i| self.metric_values()[i])
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_scores(records: &[PredictionRecord]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| !(0.0..=1.0).contains(&r.score)) {
        return Err(Error::UndefinedMetric(format!(
            "score {} for lesion {} is not a probability",
            r.score, r.lesion_id
        )));
    }
    Ok(())
}

/// ROC-AUC as the Mann-Whitney statistic: the probability that a random
/// malignant image outscores a random benign one, ties counting one half.
pub fn roc_auc(records: &[PredictionRecord]) -> Result<f64> {
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let labels: Vec<Label> = records.iter().map(|r| r.true_label).collect();
    roc_auc_scores(&scores, &labels)
}

/// [`roc_auc`] over parallel score/label slices, via mid-ranks in O(n log n).
pub fn roc_auc_scores(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|l| l.is_malignant()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one record of each class".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based mid-ranks of positives; ties share their average rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_tie = order[i..=j]
            .iter()
            .filter(|&&k| labels[k].is_malignant())
            .count();
        rank_sum += mid_rank * pos_in_tie as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Threshold metrics with malignant as the positive class. `auc`, `mcr` and
/// `lesion_acc` are left unset.
pub fn confusion_metrics(records: &[PredictionRecord], threshold: f64) -> Result<MetricsReport> {
    check_scores(records)?;
    let mut m = MetricsReport::default();
    for r in records {
        match (r.true_label, r.predicted(threshold)) {
            (Label::Malignant, Label::Malignant) => m.tp += 1,
            (Label::Benign, Label::Malignant) => m.fp += 1,
            (Label::Benign, Label::Benign) => m.tn += 1,
            (Label::Malignant, Label::Benign) => m.fn_ += 1,
        }
    }
    m.acc = ratio(m.tp + m.tn, m.total());
    m.sensitivity = ratio(m.tp, m.tp + m.fn_);
    m.specificity = ratio(m.tn, m.tn + m.fp);
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.f1 = match (m.precision, m.sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    Ok(m)
}

fn group_by_lesion(records: &[PredictionRecord]) -> BTreeMap<&str, Vec<&PredictionRecord>> {
    let mut groups: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.lesion_id.as_str()).or_default().push(r);
    }
    groups
}

/// Inner-lesion misclassification rate: per lesion, misclassified images over
/// images, averaged over lesions with at least one misclassification. Zero
/// when no lesion has one.
pub fn mcr(records: &[PredictionRecord], threshold: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric(
            "MCR of an empty prediction set".into(),
        ));
    }
    check_scores(records)?;
    let rates: Vec<f64> = group_by_lesion(records)
        .values()
        .filter_map(|imgs| {
            let wrong = imgs.iter().filter(|r| !r.is_correct(threshold)).count();
            (wrong > 0).then(|| wrong as f64 / imgs.len() as f64)
        })
        .collect();
    Ok(if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    })
}

/// Accuracy of per-lesion majority votes; ties go to the mean score.
pub fn lesion_vote_accuracy(records: &[PredictionRecord], threshold: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric(
            "lesion accuracy of an empty set".into(),
        ));
    }
    let groups = group_by_lesion(records);
    let correct = groups
        .values()
        .filter(|imgs| {
            let votes = imgs
                .iter()
                .filter(|r| r.predicted(threshold).is_malignant())
                .count();
            let malignant = match (2 * votes).cmp(&imgs.len()) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => {
                    imgs.iter().map(|r| r.score).sum::<f64>() / imgs.len() as f64 >= threshold
                }
            };
            malignant == imgs[0].true_label.is_malignant()
        })
        .count();
    Ok(correct as f64 / groups.len() as f64)
}

/// All metrics for one evaluation set.
pub fn evaluate(records: &[PredictionRecord], threshold: f64) -> Result<MetricsReport> {
    let mut m = confusion_metrics(records, threshold)?;
    m.auc = match roc_auc(records) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    m.mcr = Some(mcr(records, threshold)?);
    m.lesion_acc = Some(lesion_vote_accuracy(records, threshold)?);
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    /// Neighbour weights are `exp(similarity / temperature)`.
    pub temperature: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 200,
            temperature: 0.07,
        }
    }
}

/// One point of a k-vs-AUC series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnPoint {
    pub k: usize,
    pub auc: f64,
}

/// Malignancy scores for each query at every `k` in `ks`, as `[query][k index]`.
///
/// Neighbours are ranked by cosine similarity (descending), ties going to the
/// lower training index.
fn knn_scores_multi(
    train: &Matrix,
    train_labels: &[Label],
    queries: &Matrix,
    ks: &[usize],
    temperature: f64,
) -> Result<Vec<Vec<f64>>> {
    if train.rows() != train_labels.len() {
        return Err(Error::Shape(format!(
            "{} reference rows but {} labels",
            train.rows(),
            train_labels.len()
        )));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "KNN temperature must be > 0, got {temperature}"
        )));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > train.rows()) {
        return Err(Error::Config(format!(
            "k = {k} outside 1..={} reference rows",
            train.rows()
        )));
    }
    let sims = l2_normalize_rows(queries)?.matmul_t(&l2_normalize_rows(train)?)?;
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(queries.rows());
    let mut order: Vec<usize> = Vec::with_capacity(train.rows());
    for q in 0..queries.rows() {
        let row = sims.row(q);
        order.clear();
        order.extend(0..train.rows());
        let by_rank = |&a: &usize, &b: &usize| row[b].total_cmp(&row[a]).then(a.cmp(&b));
        if max_k < order.len() {
            order.select_nth_unstable_by(max_k, by_rank);
            order.truncate(max_k);
        }
        order.sort_unstable_by(by_rank);
        let top = order.first().map_or(0.0, |&j| row[j]);
        // prefix sums of weights, shifted by the top similarity for stability
        let mut malignant = 0.0;
        let mut total = 0.0;
        let mut prefix = Vec::with_capacity(max_k);
        for &j in &order {
            let w = ((row[j] - top) / temperature).exp();
            total += w;
            if train_labels[j].is_malignant() {
                malignant += w;
            }
            prefix.push(malignant / total);
        }
        out.push(ks.iter().map(|&k| prefix[k - 1]).collect());
    }
    Ok(out)
}

/// Weighted KNN malignancy score of each query row, ranking reference rows by
/// cosine similarity.
pub fn weighted_knn_scores(
    train: &Matrix,
    train_labels: &[Label],
    queries: &Matrix,
    config: &KnnConfig,
) -> Result<Vec<f64>> {
    Ok(knn_scores_multi(
        train,
        train_labels,
        queries,
        &[config.k],
        config.temperature,
    )?
    .into_iter()
    .map(|s| s[0])
    .collect())
}

/// ROC-AUC of the weighted KNN probe at each `k`, in input order.
pub fn knn_auc_sweep(
    train: &Matrix,
    train_labels: &[Label],
    queries: &Matrix,
    query_labels: &[Label],
    ks: &[usize],
    temperature: f64,
) -> Result<Vec<KnnPoint>> {
    if queries.rows() != query_labels.len() {
        return Err(Error::Shape(format!(
            "{} queries but {} labels",
            queries.rows(),
            query_labels.len()
        )));
    }
    let scores = knn_scores_multi(train, train_labels, queries, ks, temperature)?;
    ks.iter()
        .enumerate()
        .map(|(i, &k)| {
            let s: Vec<f64> = scores.iter().map(|row| row[i]).collect();
            Ok(KnnPoint {
                k,
                auc: roc_auc_scores(&s, query_labels)?,
            })
        })
        .collect()
}

/// 1-2-5 series up to `max_k`: 1, 2, 5, 10, 20, 50, ...
pub fn log_spaced_ks(max_k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let k = m * decade;
            if k > max_k {
                break 'outer;
            }
            out.push(k);
        }
        decade *= 10;
    }
    out
}
