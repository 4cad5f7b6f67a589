//! Co-occurrence/extractibility mining.
//!
//! A cue class `C` is scored against a target `Y` by the mean, over training
//! images containing `Y`, of `area(C) - area(Y)` (area as a fraction of the
//! image). Cues scoring above `alpha` form the target's cue set. An image
//! containing `Y` whose every cue covers less than `beta` is a hard positive;
//! an image without `Y` where some cue covers more than `beta` is a hard
//! negative.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationStore, CategoryId, DatasetSplit, ImageId, SplitPart};
use crate::error::{Error, Result};
use crate::tags::{Criterion, HardnessTags, MiningParams, Tag};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextScore {
    pub target: CategoryId,
    pub cue: CategoryId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSet {
    pub target: CategoryId,
    pub alpha: f64,
    /// Descending by score, ties broken by ascending category id.
    pub cues: Vec<(CategoryId, f64)>,
}

impl CueSet {
    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    /// The highest-scoring cue, used to define environments.
    pub fn top(&self) -> Option<CategoryId> {
        self.cues.first().map(|&(c, _)| c)
    }

    pub fn ids(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.cues.iter().map(|&(c, _)| c)
    }
}

fn target_positives(
    store: &AnnotationStore,
    train_ids: &[ImageId],
    target: CategoryId,
) -> Result<Vec<(ImageId, f64)>> {
    let mut out = Vec::new();
    for &id in train_ids {
        let area = store.area_fraction(id, target)?;
        if area > 0.0 {
            out.push((id, area));
        }
    }
    if out.is_empty() {
        return Err(Error::Undefined(format!(
            "no training image contains category {target}"
        )));
    }
    Ok(out)
}

pub fn context_score(
    store: &AnnotationStore,
    train_ids: &[ImageId],
    target: CategoryId,
    cue: CategoryId,
) -> Result<ContextScore> {
    if cue == target {
        return Err(Error::Config(format!(
            "cue and target are the same category {target}"
        )));
    }
    let positives = target_positives(store, train_ids, target)?;
    let mut sum = 0.0;
    for &(id, target_area) in &positives {
        sum += store.area_fraction(id, cue)? - target_area;
    }
    Ok(ContextScore {
        target,
        cue,
        score: sum / positives.len() as f64,
    })
}

/// Context scores of every other category against `target`, in category id
/// order. One pass over the positives; each score accumulates the same
/// per-image differences, in the same order, as [`context_score`].
pub fn context_scores(
    store: &AnnotationStore,
    train_ids: &[ImageId],
    target: CategoryId,
) -> Result<Vec<ContextScore>> {
    let positives = target_positives(store, train_ids, target)?;
    let cues: Vec<CategoryId> = store.categories().ids().filter(|&c| c != target).collect();
    let slot: BTreeMap<CategoryId, usize> = cues.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut sums = vec![0.0; cues.len()];
    let mut present = vec![0.0; cues.len()];
    for &(id, target_area) in &positives {
        present.iter_mut().for_each(|a| *a = 0.0);
        for (c, area) in store.present_categories(id)? {
            if let Some(&i) = slot.get(&c) {
                present[i] = area;
            }
        }
        for (sum, &area) in sums.iter_mut().zip(&present) {
            *sum += area - target_area;
        }
    }
    let n = positives.len() as f64;
    Ok(cues
        .into_iter()
        .zip(sums)
        .map(|(cue, sum)| ContextScore {
            target,
            cue,
            score: sum / n,
        })
        .collect())
}

/// All categories whose context score strictly exceeds `alpha`.
pub fn alpha_context_cues(
    store: &AnnotationStore,
    train_ids: &[ImageId],
    target: CategoryId,
    alpha: f64,
) -> Result<CueSet> {
    if alpha.is_nan() {
        return Err(Error::Config("alpha is NaN".into()));
    }
    let mut cues: Vec<(CategoryId, f64)> = context_scores(store, train_ids, target)?
        .into_iter()
        .filter(|s| s.score > alpha)
        .map(|s| (s.cue, s.score))
        .collect();
    cues.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(CueSet {
        target,
        alpha,
        cues,
    })
}

/// Tags each of `eval_ids` for `target` under the noisy-or rule. Both
/// comparisons against `beta` are strict; equality counts as easy.
///
/// `cue_set` must come from the training split; nothing about the evaluated
/// images other than their target and cue areas is read.
pub fn tag_ce_hardness(
    store: &AnnotationStore,
    eval_ids: &[ImageId],
    target: CategoryId,
    cue_set: &CueSet,
    beta: f64,
) -> Result<HardnessTags> {
    let mut tags = BTreeMap::new();
    for &id in eval_ids {
        let positive = store.is_present(id, target)?;
        let mut cue_areas = Vec::with_capacity(cue_set.len());
        for cue in cue_set.ids() {
            cue_areas.push(store.area_fraction(id, cue)?);
        }
        let hard = if positive {
            !cue_areas.is_empty() && cue_areas.iter().all(|&a| a < beta)
        } else {
            cue_areas.iter().any(|&a| a > beta)
        };
        tags.insert(id, Tag::from_label(positive, hard));
    }
    Ok(HardnessTags {
        task: target,
        criterion: Criterion::Ce,
        params: MiningParams::Ce {
            alpha: cue_set.alpha,
            beta,
        },
        tags,
    })
}

/// `(P[hard | Y = 1], P[hard | Y = 0])` over a tagged split.
pub fn hard_rates(tags: &HardnessTags) -> Result<(f64, f64)> {
    let counts = tags.counts();
    if counts.positives() == 0 || counts.negatives() == 0 {
        return Err(Error::Undefined(format!(
            "task {} needs both positives and negatives ({} / {})",
            tags.task,
            counts.positives(),
            counts.negatives()
        )));
    }
    Ok((
        counts.hard_positive as f64 / counts.positives() as f64,
        counts.hard_negative as f64 / counts.negatives() as f64,
    ))
}

/// Conditional hard rates on `eval_part` with cues mined on the training part.
pub fn hardness_balance(
    store: &AnnotationStore,
    split: &DatasetSplit,
    eval_part: SplitPart,
    target: CategoryId,
    alpha: f64,
    beta: f64,
) -> Result<(f64, f64)> {
    let cues = alpha_context_cues(store, &split.train, target, alpha)?;
    let tags = tag_ce_hardness(store, split.part(eval_part), target, &cues, beta)?;
    hard_rates(&tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancePoint {
    pub alpha: f64,
    pub beta: f64,
    pub p_hard_given_pos: f64,
    pub p_hard_given_neg: f64,
}

/// Scans a grid of `(alpha, beta)` values. Context scores are computed once
/// per target and re-thresholded for every alpha.
pub fn balance_grid(
    store: &AnnotationStore,
    split: &DatasetSplit,
    eval_part: SplitPart,
    target: CategoryId,
    alphas: &[f64],
    betas: &[f64],
) -> Result<Vec<BalancePoint>> {
    let scores = context_scores(store, &split.train, target)?;
    let mut out = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        let mut cues: Vec<(CategoryId, f64)> = scores
            .iter()
            .filter(|s| s.score > alpha)
            .map(|s| (s.cue, s.score))
            .collect();
        cues.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        let cue_set = CueSet {
            target,
            alpha,
            cues,
        };
        for &beta in betas {
            let tags = tag_ce_hardness(store, split.part(eval_part), target, &cue_set, beta)?;
            let (p, n) = hard_rates(&tags)?;
            out.push(BalancePoint {
                alpha,
                beta,
                p_hard_given_pos: p,
                p_hard_given_neg: n,
            });
        }
    }
    Ok(out)
}
