//! Lesion-grouped mini-batches and lesion-level cross-validation folds.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// `groups_per_batch` lesions × `views_per_group` views per mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub groups_per_batch: usize,
    pub views_per_group: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            groups_per_batch: 8,
            views_per_group: 8,
        }
    }
}

impl BatchSpec {
    pub fn new(groups_per_batch: usize, views_per_group: usize) -> Result<Self> {
        let spec = Self {
            groups_per_batch,
            views_per_group,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups_per_batch == 0 || self.views_per_group == 0 {
            return Err(Error::Config(format!(
                "batch spec {}x{} must be at least 1x1",
                self.groups_per_batch, self.views_per_group
            )));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.groups_per_batch * self.views_per_group
    }

    /// Batches per epoch: `ceil(total_images / batch_size)`.
    pub fn batches_per_epoch(&self, total_images: usize) -> usize {
        total_images.div_ceil(self.batch_size()).max(1)
    }
}

/// One sampled image: position of its lesion in the index and the view within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BatchEntry {
    pub lesion: usize,
    pub view: usize,
}

/// Draws `groups_per_batch` distinct lesions uniformly, then `views_per_group`
/// views from each.
///
/// `view_counts[l]` is the number of views of lesion `l`. Views are drawn
/// without replacement when a lesion has enough of them. Otherwise every view
/// is used once and the remaining slots are filled by uniform draws with
/// replacement.
pub fn sample_batch(
    view_counts: &[usize],
    spec: &BatchSpec,
    rng: &mut Rng,
) -> Result<Vec<BatchEntry>> {
    spec.validate()?;
    if view_counts.len() < spec.groups_per_batch {
        return Err(Error::InsufficientData(format!(
            "{} lesions available, batch needs {}",
            view_counts.len(),
            spec.groups_per_batch
        )));
    }
    if let Some(l) = view_counts.iter().position(|&c| c == 0) {
        return Err(Error::InsufficientData(format!("lesion {l} has no views")));
    }
    let lesions = index::sample(rng, view_counts.len(), spec.groups_per_batch);
    let mut out = Vec::with_capacity(spec.batch_size());
    for lesion in lesions.iter() {
        let count = view_counts[lesion];
        let k = spec.views_per_group;
        if count >= k {
            for view in index::sample(rng, count, k).iter() {
                out.push(BatchEntry { lesion, view });
            }
        } else {
            let mut views: Vec<usize> = (0..count).collect();
            views.shuffle(rng);
            views.extend((count..k).map(|_| rng.random_range(0..count)));
            out.extend(views.into_iter().map(|view| BatchEntry { lesion, view }));
        }
    }
    Ok(out)
}

/// Assignment of every lesion to one of `fold_count` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_count: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, lesion_id: &str) -> Option<usize> {
        self.assignment.get(lesion_id).copied()
    }

    /// Lesion ids of one fold, in id order.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles lesions and deals them round-robin into `k` folds, so fold
/// sizes differ by at most one.
pub fn kfold_split<S: AsRef<str>>(lesion_ids: &[S], k: usize, rng: &mut Rng) -> Result<FoldSplit> {
    if k == 0 {
        return Err(Error::Config("fold count must be >= 1".into()));
    }
    let mut ids: Vec<&str> = lesion_ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    let before = ids.len();
    ids.dedup();
    if ids.len() != before {
        return Err(Error::DataIntegrity(
            "duplicate lesion ids in fold split".into(),
        ));
    }
    if ids.len() < k {
        return Err(Error::Config(format!(
            "{k} folds requested for {} lesions",
            ids.len()
        )));
    }
    ids.shuffle(rng);
    let assignment = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % k))
        .collect();
    Ok(FoldSplit {
        fold_count: k,
        assignment,
    })
}
