//! Per-anchor positive and negative index sets.
//!
//! In the default dual-view mode every image in a batch is augmented twice.
//! Anchors are the first views and candidates the second; index `j` in a
//! pair set refers to candidate `j`. Because the candidate at the anchor's
//! own index is another augmentation of the same image, it is always a
//! positive.
//!
//! | variant        | positives              | negatives                          |
//! |----------------|------------------------|------------------------------------|
//! | `Lr`           | same lesion (incl. i)  | other lesions                      |
//! | `Ir`           | `{i}`                  | every `k ≠ i`                      |
//! | `LrMinusSc`    | same lesion            | other lesions of the other class   |
//! | `LrMinusDc`    | same lesion            | other lesions of the same class    |
//! | `LrMinusAll`   | same lesion            | none                               |
//!
//! In single-view mode anchors and candidates are the same embeddings, so
//! the anchor itself is dropped from both sets.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairVariant {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "IR")]
    Ir,
    #[serde(rename = "LR(-SC)")]
    LrMinusSc,
    #[serde(rename = "LR(-DC)")]
    LrMinusDc,
    #[serde(rename = "LR(-)")]
    LrMinusAll,
}

impl PairVariant {
    pub const ALL: [PairVariant; 5] = [
        PairVariant::Lr,
        PairVariant::Ir,
        PairVariant::LrMinusSc,
        PairVariant::LrMinusDc,
        PairVariant::LrMinusAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PairVariant::Lr => "LR",
            PairVariant::Ir => "IR",
            PairVariant::LrMinusSc => "LR(-SC)",
            PairVariant::LrMinusDc => "LR(-DC)",
            PairVariant::LrMinusAll => "LR(-)",
        }
    }
}

impl fmt::Display for PairVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PairVariant {
    type Err = Error;

    /// Accepts the display names and dash-only spellings such as `LR-SC` or `LR-`.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_uppercase()
            .chars()
            .filter(|c| !matches!(c, '(' | ')' | '_'))
            .collect();
        match norm.as_str() {
            "LR" => Ok(PairVariant::Lr),
            "IR" => Ok(PairVariant::Ir),
            "LR-SC" | "LRMINUSSC" => Ok(PairVariant::LrMinusSc),
            "LR-DC" | "LRMINUSDC" => Ok(PairVariant::LrMinusDc),
            "LR-" | "LR-ALL" | "LRMINUSALL" => Ok(PairVariant::LrMinusAll),
            _ => Err(Error::Parse(format!("unknown pair variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    #[default]
    Dual,
    Single,
}

/// Lesion identity and class of each image in a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchLabels {
    lesion_ids: Vec<usize>,
    class_labels: Vec<Label>,
}

impl BatchLabels {
    pub fn new(lesion_ids: Vec<usize>, class_labels: Vec<Label>) -> Result<Self> {
        if lesion_ids.is_empty() {
            return Err(Error::InvalidBatch("batch is empty".into()));
        }
        if lesion_ids.len() != class_labels.len() {
            return Err(Error::InvalidBatch(format!(
                "{} lesion ids but {} class labels",
                lesion_ids.len(),
                class_labels.len()
            )));
        }
        let mut seen: HashMap<usize, Label> = HashMap::new();
        for (&l, &y) in lesion_ids.iter().zip(&class_labels) {
            if let Some(&prev) = seen.get(&l) {
                if prev != y {
                    return Err(Error::InvalidBatch(format!(
                        "lesion {l} carries both {prev:?} and {y:?}"
                    )));
                }
            } else {
                seen.insert(l, y);
            }
        }
        Ok(Self {
            lesion_ids,
            class_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.lesion_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lesion_ids.is_empty()
    }

    pub fn lesion_ids(&self) -> &[usize] {
        &self.lesion_ids
    }

    pub fn class_labels(&self) -> &[Label] {
        &self.class_labels
    }
}

/// Positive and negative candidate indices for each anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSets {
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

impl PairSets {
    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

/// Dual-view pair sets.
pub fn build_pairs(variant: PairVariant, labels: &BatchLabels) -> PairSets {
    build_pairs_with_mode(variant, labels, ViewMode::Dual)
}

pub fn build_pairs_with_mode(
    variant: PairVariant,
    labels: &BatchLabels,
    mode: ViewMode,
) -> PairSets {
    let n = labels.len();
    let lesion = &labels.lesion_ids;
    let class = &labels.class_labels;
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    for i in 0..n {
        let keep_self = |k: usize| mode == ViewMode::Dual || k != i;
        let pos: Vec<usize> = match variant {
            PairVariant::Ir => vec![i],
            _ => (0..n).filter(|&j| lesion[j] == lesion[i]).collect(),
        };
        let neg: Vec<usize> = match variant {
            PairVariant::Ir => (0..n).filter(|&k| k != i).collect(),
            PairVariant::Lr => (0..n).filter(|&k| lesion[k] != lesion[i]).collect(),
            PairVariant::LrMinusSc => (0..n)
                .filter(|&k| lesion[k] != lesion[i] && class[k] != class[i])
                .collect(),
            PairVariant::LrMinusDc => (0..n)
                .filter(|&k| lesion[k] != lesion[i] && class[k] == class[i])
                .collect(),
            PairVariant::LrMinusAll => Vec::new(),
        };
        positives.push(pos.into_iter().filter(|&k| keep_self(k)).collect());
        negatives.push(neg.into_iter().filter(|&k| keep_self(k)).collect());
    }
    PairSets {
        positives,
        negatives,
    }
}
