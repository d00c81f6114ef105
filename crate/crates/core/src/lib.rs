//! Multi-view contrastive representation learning.
//!
//! Images (views) are grouped by the lesion they depict. A shared encoder is
//! trained on a benign/malignant classification objective together with a
//! contrastive auxiliary objective whose positives are views of the same
//! lesion. Instance-level positives and several negative-removal ablations are
//! available through [`pairing::PairVariant`].
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense matrices, the MLP encoder and linear head, Adam, the
//!   step-decay schedule and a finite-difference gradient checker.
//! * [`pairing`]: per-anchor positive/negative index sets.
//! * [`losses`]: cross-entropy, contrastive and joint losses with analytic gradients.
//! * [`sampling`]: lesion-grouped mini-batches and lesion-level k-fold splits.
//! * [`dataset`]: synthetic multi-view data, augmentation and manifest I/O.
//! * [`evaluation`]: ROC-AUC, threshold metrics, inner-lesion MCR and the weighted KNN probe.
//! * [`trainer`]: joint training, cross-validation and ablation drivers.
//! * [`report`]: JSON / text table / CSV emission.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod pairing;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

/// Benign/malignant class of a lesion. Malignant is the positive class.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Benign = 0,
    Malignant = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_malignant(self) -> bool {
        self == Label::Malignant
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malignant),
            other => Err(Error::Parse(format!("label must be 0 or 1, got {other}"))),
        }
    }
}
