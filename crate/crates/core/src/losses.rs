//! Classification, contrastive and joint objectives with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::pairing::PairSets;
use crate::tensor::Matrix;
use crate::{Error, Label, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Cosine similarities between unit-norm anchor and candidate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(Matrix);

impl SimilarityMatrix {
    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn get(&self, anchor: usize, candidate: usize) -> f64 {
        self.0.get(anchor, candidate)
    }
}

/// Dot products of already-normalized rows, `anchors × candidates`.
pub fn cosine_similarity_matrix(anchors: &Matrix, candidates: &Matrix) -> Result<SimilarityMatrix> {
    Ok(SimilarityMatrix(anchors.matmul_t(candidates)?))
}

/// Value and gradients of a loss. Gradient fields a loss does not produce are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossOutput {
    pub value: f64,
    /// `dL/dlogit` for the classification head.
    pub grad_logits: Option<Vec<f64>>,
    pub grad_anchors: Option<Matrix>,
    pub grad_candidates: Option<Matrix>,
    /// Contribution of each anchor before averaging (contrastive loss only).
    pub per_anchor: Vec<f64>,
    /// Anchors with no positive, which contribute zero.
    pub skipped_anchors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveOptions {
    /// Similarities are divided by this before the softmax. 1.0 leaves them unscaled.
    pub temperature: f64,
    /// Divide each anchor's positive sum by `|P(i)|`.
    pub normalize_positives: bool,
}

impl ContrastiveOptions {
    pub fn new(temperature: f64) -> Self {
        Self {
            temperature,
            normalize_positives: false,
        }
    }
}

impl Default for ContrastiveOptions {
    fn default() -> Self {
        Self::new(1.0)
    }
}

/// Contrastive loss over arbitrary pair sets.
///
/// ```text
/// L = -(1/N) Σ_i Σ_{j∈P(i)} log( exp(S_ij/τ) / Σ_{k∈P(i)∪N(i)} exp(S_ik/τ) )
/// ```
///
/// `anchors` and `candidates` must be row-normalized. `N` is the anchor count
/// even when some anchors have no positive and are skipped.
pub fn contrastive_loss(
    anchors: &Matrix,
    candidates: &Matrix,
    pairs: &PairSets,
    options: &ContrastiveOptions,
) -> Result<LossOutput> {
    let tau = options.temperature;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    let n = anchors.rows();
    if pairs.positives.len() != n || pairs.negatives.len() != n {
        return Err(Error::Shape(format!(
            "{n} anchors but pair sets for {}",
            pairs.positives.len()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("contrastive loss over an empty batch".into()));
    }
    let m = candidates.rows();
    if pairs
        .positives
        .iter()
        .chain(&pairs.negatives)
        .flatten()
        .any(|&k| k >= m)
    {
        return Err(Error::Shape(format!(
            "pair index out of range for {m} candidates"
        )));
    }
    let sim = cosine_similarity_matrix(anchors, candidates)?;

    let inv_n = 1.0 / n as f64;
    let mut per_anchor = vec![0.0; n];
    let mut skipped = 0;
    // dL/dS, only filled on P(i) ∪ N(i)
    let mut grad_sim = Matrix::zeros(n, m);
    for (i, anchor_loss) in per_anchor.iter_mut().enumerate() {
        let pos = &pairs.positives[i];
        if pos.is_empty() {
            skipped += 1;
            continue;
        }
        let neg = &pairs.negatives[i];
        let logit = |k: usize| sim.get(i, k) / tau;
        let max = pos
            .iter()
            .chain(neg)
            .map(|&k| logit(k))
            .fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = pos.iter().chain(neg).map(|&k| (logit(k) - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let weight = if options.normalize_positives {
            1.0 / pos.len() as f64
        } else {
            1.0
        };
        *anchor_loss = weight * pos.iter().map(|&j| lse - logit(j)).sum::<f64>();

        let mass = weight * pos.len() as f64;
        let row = grad_sim.row_mut(i);
        for &k in pos.iter().chain(neg) {
            row[k] = mass * (logit(k) - lse).exp() * inv_n / tau;
        }
        for &j in pos {
            row[j] -= weight * inv_n / tau;
        }
    }

    let grad_anchors = grad_sim.matmul(candidates)?;
    let grad_candidates = grad_sim.t_matmul(anchors)?;
    let value = per_anchor.iter().sum::<f64>() * inv_n;
    Ok(LossOutput {
        value,
        grad_logits: None,
        grad_anchors: Some(grad_anchors),
        grad_candidates: Some(grad_candidates),
        per_anchor,
        skipped_anchors: skipped,
    })
}

/// Mean binary cross-entropy of malignancy probabilities.
///
/// `grad_logits` is the gradient with respect to the pre-sigmoid logits that
/// produced `scores`, i.e. `(p - y) / N`.
pub fn binary_cross_entropy(scores: &[f64], labels: &[Label]) -> Result<LossOutput> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Shape("cross-entropy over an empty batch".into()));
    }
    let inv_n = 1.0 / scores.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&p, &y) in scores.iter().zip(labels) {
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let y = y.as_f64();
        value -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        grad.push((p - y) * inv_n);
    }
    Ok(LossOutput {
        value: value * inv_n,
        grad_logits: Some(grad),
        ..LossOutput::default()
    })
}

/// [`binary_cross_entropy`] of `sigmoid(logits)`.
pub fn binary_cross_entropy_with_logits(logits: &[f64], labels: &[Label]) -> Result<LossOutput> {
    let scores: Vec<f64> = logits.iter().map(|&z| crate::tensor::sigmoid(z)).collect();
    binary_cross_entropy(&scores, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLossConfig {
    pub alpha: f64,
    pub temperature: f64,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 1.0,
        }
    }
}

/// `cls + α·con`, with gradients combined the same way.
pub fn joint_loss(cls: &LossOutput, con: &LossOutput, config: &JointLossConfig) -> LossOutput {
    let alpha = config.alpha;
    LossOutput {
        value: cls.value + alpha * con.value,
        grad_logits: cls.grad_logits.clone(),
        grad_anchors: con.grad_anchors.as_ref().map(|g| g.scaled(alpha)),
        grad_candidates: con.grad_candidates.as_ref().map(|g| g.scaled(alpha)),
        per_anchor: con.per_anchor.iter().map(|v| alpha * v).collect(),
        skipped_anchors: con.skipped_anchors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::{build_pairs, build_pairs_with_mode, BatchLabels, PairVariant, ViewMode};
    use crate::tensor::{finite_diff_grad, l2_normalize_rows, max_relative_error};
    use Label::{Benign as B, Malignant as M};

    fn unit_rows_at(angles: &[f64]) -> Matrix {
        let rows: Vec<[f64; 2]> = angles.iter().map(|a| [a.cos(), a.sin()]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    /// Literal transcription of the loss formula, no log-sum-exp tricks.
    fn brute_force(anchors: &Matrix, cands: &Matrix, pairs: &PairSets) -> f64 {
        let n = anchors.rows();
        let s = |i: usize, k: usize| -> f64 {
            anchors
                .row(i)
                .iter()
                .zip(cands.row(k))
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut total = 0.0;
        for i in 0..n {
            let denom: f64 = pairs.positives[i]
                .iter()
                .chain(&pairs.negatives[i])
                .map(|&k| s(i, k).exp())
                .sum();
            for &j in &pairs.positives[i] {
                total += (s(i, j).exp() / denom).ln();
            }
        }
        -total / n as f64
    }

    #[test]
    fn similarity_examples() {
        let a = Matrix::from_rows(&[[0.6, 0.8], [1.0, 0.0]]).unwrap();
        let c = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = cosine_similarity_matrix(&a, &c).unwrap();
        assert!((s.get(0, 0) - 0.6).abs() < 1e-15);
        assert_eq!(s.get(1, 0), 1.0);
        assert_eq!(s.get(1, 1), 0.0);
        let bad = Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(cosine_similarity_matrix(&a, &bad).is_err());
    }

    #[test]
    fn identical_embeddings_give_log_two() {
        let z = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let pairs = PairSets {
            positives: vec![vec![0], vec![1]],
            negatives: vec![vec![1], vec![0]],
        };
        let out = contrastive_loss(&z, &z, &pairs, &ContrastiveOptions::default()).unwrap();
        assert!((out.value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lone_positive_without_negatives_is_zero() {
        let z = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let pairs = PairSets {
            positives: vec![vec![0]],
            negatives: vec![vec![]],
        };
        let out = contrastive_loss(&z, &z, &pairs, &ContrastiveOptions::default()).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn matches_brute_force_on_fixed_angles() {
        let anchors = unit_rows_at(&[0.1, 0.4, 2.0, 2.5]);
        let cands = unit_rows_at(&[0.2, 0.3, 2.2, 2.9]);
        let labels = BatchLabels::new(vec![0, 0, 1, 1], vec![M, M, B, B]).unwrap();
        let pairs = build_pairs(PairVariant::Lr, &labels);
        let out =
            contrastive_loss(&anchors, &cands, &pairs, &ContrastiveOptions::default()).unwrap();
        let expected = brute_force(&anchors, &cands, &pairs);
        assert!(
            (out.value - expected).abs() < 1e-12,
            "{} vs {expected}",
            out.value
        );
    }

    #[test]
    fn rejects_bad_temperature_and_indices() {
        let z = unit_rows_at(&[0.0, 1.0]);
        let pairs = PairSets {
            positives: vec![vec![0], vec![5]],
            negatives: vec![vec![], vec![]],
        };
        assert!(matches!(
            contrastive_loss(&z, &z, &pairs, &ContrastiveOptions::new(1.0)),
            Err(Error::Shape(_))
        ));
        let pairs = PairSets {
            positives: vec![vec![0], vec![1]],
            negatives: vec![vec![], vec![]],
        };
        assert!(matches!(
            contrastive_loss(&z, &z, &pairs, &ContrastiveOptions::new(0.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_view_skips_anchors_without_positive() {
        let z = unit_rows_at(&[0.0, 0.2, 1.5]);
        let labels = BatchLabels::new(vec![0, 0, 1], vec![M, M, B]).unwrap();
        let pairs = build_pairs_with_mode(PairVariant::Lr, &labels, ViewMode::Single);
        let out = contrastive_loss(&z, &z, &pairs, &ContrastiveOptions::default()).unwrap();
        assert_eq!(out.skipped_anchors, 1);
        assert_eq!(out.per_anchor[2], 0.0);
        // averaging denominator stays at the full batch size
        assert!((out.value - (out.per_anchor[0] + out.per_anchor[1]) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences_with_temperature_and_normalization() {
        let anchors = unit_rows_at(&[0.1, 0.9, 2.0, -1.0, 0.5]);
        let cands = unit_rows_at(&[0.3, 0.7, 2.4, -0.8, 3.0]);
        let labels = BatchLabels::new(vec![0, 0, 1, 2, 1], vec![M, M, B, M, B]).unwrap();
        for variant in PairVariant::ALL {
            for options in [
                ContrastiveOptions::new(1.0),
                ContrastiveOptions::new(0.2),
                ContrastiveOptions {
                    temperature: 0.5,
                    normalize_positives: true,
                },
            ] {
                let pairs = build_pairs(variant, &labels);
                let out = contrastive_loss(&anchors, &cands, &pairs, &options).unwrap();
                let num_a = finite_diff_grad(
                    |v| {
                        let a = Matrix::from_vec(5, 2, v.to_vec()).unwrap();
                        contrastive_loss(&a, &cands, &pairs, &options)
                            .unwrap()
                            .value
                    },
                    anchors.data(),
                    1e-5,
                );
                let num_c = finite_diff_grad(
                    |v| {
                        let c = Matrix::from_vec(5, 2, v.to_vec()).unwrap();
                        contrastive_loss(&anchors, &c, &pairs, &options)
                            .unwrap()
                            .value
                    },
                    cands.data(),
                    1e-5,
                );
                assert!(
                    max_relative_error(out.grad_anchors.as_ref().unwrap().data(), &num_a) < 1e-6
                );
                assert!(
                    max_relative_error(out.grad_candidates.as_ref().unwrap().data(), &num_c) < 1e-6
                );
            }
        }
    }

    #[test]
    fn loss_is_non_negative_and_normalization_divides() {
        let anchors = l2_normalize_rows(
            &Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [-1.0, 0.1, 0.1]]).unwrap(),
        )
        .unwrap();
        let labels = BatchLabels::new(vec![0, 0, 1], vec![M, M, B]).unwrap();
        let pairs = build_pairs(PairVariant::Lr, &labels);
        let plain =
            contrastive_loss(&anchors, &anchors, &pairs, &ContrastiveOptions::default()).unwrap();
        let normed = contrastive_loss(
            &anchors,
            &anchors,
            &pairs,
            &ContrastiveOptions {
                temperature: 1.0,
                normalize_positives: true,
            },
        )
        .unwrap();
        assert!(plain.value >= 0.0);
        assert!((normed.per_anchor[0] - plain.per_anchor[0] / 2.0).abs() < 1e-15);
        assert!((normed.per_anchor[2] - plain.per_anchor[2]).abs() < 1e-15);
    }

    #[test]
    fn bce_examples() {
        let out = binary_cross_entropy(&[1.0 - 1e-12], &[M]).unwrap();
        assert!(out.value.abs() < 1e-11);
        for y in [B, M] {
            let out = binary_cross_entropy(&[0.5], &[y]).unwrap();
            assert!((out.value - 2f64.ln()).abs() < 1e-15);
        }
        let out = binary_cross_entropy(&[0.9, 0.2], &[M, B]).unwrap();
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((out.value - expected).abs() < 1e-15);
        assert!((out.value - 0.1643).abs() < 1e-4);
        assert!(binary_cross_entropy(&[0.5], &[M, B]).is_err());
    }

    #[test]
    fn bce_clamps_extreme_probabilities() {
        let out = binary_cross_entropy(&[0.0, 1.0], &[M, B]).unwrap();
        assert!(out.value.is_finite());
        // 1 - (1 - 1e-12) is not exactly 1e-12 in binary floating point
        assert!((out.value - -(1e-12f64).ln()).abs() < 1e-3);
    }

    #[test]
    fn bce_logit_gradient_matches_finite_differences() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        let labels = [M, B, B, M];
        let out = binary_cross_entropy_with_logits(&logits, &labels).unwrap();
        let num = finite_diff_grad(
            |z| binary_cross_entropy_with_logits(z, &labels).unwrap().value,
            &logits,
            1e-5,
        );
        assert!(max_relative_error(out.grad_logits.as_ref().unwrap(), &num) < 1e-6);
    }

    #[test]
    fn joint_loss_combines_linearly() {
        let cls = LossOutput {
            value: 0.2,
            grad_logits: Some(vec![0.1, -0.1]),
            ..Default::default()
        };
        let con = LossOutput {
            value: 0.4,
            grad_anchors: Some(Matrix::from_rows(&[[1.0, 2.0]]).unwrap()),
            grad_candidates: Some(Matrix::from_rows(&[[-2.0, 4.0]]).unwrap()),
            ..Default::default()
        };
        let j = joint_loss(&cls, &con, &JointLossConfig::default());
        assert!((j.value - 0.4).abs() < 1e-15);
        assert_eq!(j.grad_anchors.unwrap().data(), &[0.5, 1.0]);
        assert_eq!(j.grad_candidates.unwrap().data(), &[-1.0, 2.0]);
        assert_eq!(j.grad_logits, cls.grad_logits);

        let base = joint_loss(
            &cls,
            &con,
            &JointLossConfig {
                alpha: 0.0,
                temperature: 1.0,
            },
        );
        assert_eq!(base.value, cls.value);
        assert_eq!(JointLossConfig::default().alpha, 0.5);
    }
}
