//! Gist criterion: caption-embedding similarity to the class prototype.
//!
//! Each image is represented by the mean of its caption vectors; the
//! prototype of a target is the mean image embedding over training images
//! containing it. Positives far from the prototype and negatives close to it
//! are hard. Thresholds are calibrated so the hard counts match the CE counts
//! for the same task and split.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationStore, CategoryId, EmbeddingStore, ImageId};
use crate::error::{Error, Result};
use crate::tags::{Criterion, HardnessTags, MiningParams, Tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GistScoreTable {
    pub task: CategoryId,
    pub similarities: BTreeMap<ImageId, f64>,
    /// Images whose embedding has zero norm; they are not tagged.
    pub excluded: Vec<ImageId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPair {
    pub tau_hp: f64,
    pub tau_hn: f64,
}

pub fn image_embedding(embeddings: &EmbeddingStore, image: ImageId) -> Result<Vec<f64>> {
    let captions = embeddings
        .captions(image)
        .ok_or_else(|| Error::Lookup(format!("no caption embeddings for image {image}")))?;
    Ok(mean_vector(captions.iter().map(Vec::as_slice), embeddings.dim()))
}

fn mean_vector<'a>(vectors: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    let n = n as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

/// Mean image embedding over the training images where `target` is present.
pub fn prototype_embedding(
    store: &AnnotationStore,
    embeddings: &EmbeddingStore,
    train_ids: &[ImageId],
    target: CategoryId,
) -> Result<Vec<f64>> {
    let mut members = Vec::new();
    for &id in train_ids {
        if store.is_present(id, target)? {
            members.push(image_embedding(embeddings, id)?);
        }
    }
    if members.is_empty() {
        return Err(Error::Undefined(format!(
            "no training image contains category {target}; prototype undefined"
        )));
    }
    Ok(mean_vector(members.iter().map(Vec::as_slice), embeddings.dim()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Option<f64> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Some((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn gist_scores(
    embeddings: &EmbeddingStore,
    task: CategoryId,
    eval_ids: &[ImageId],
    prototype: &[f64],
) -> Result<GistScoreTable> {
    if norm(prototype) == 0.0 {
        return Err(Error::Undefined(format!(
            "prototype for task {task} has zero norm"
        )));
    }
    if prototype.len() != embeddings.dim() {
        return Err(Error::Config(format!(
            "prototype has dimension {}, store has {}",
            prototype.len(),
            embeddings.dim()
        )));
    }
    let mut similarities = BTreeMap::new();
    let mut excluded = Vec::new();
    for &id in eval_ids {
        let u = image_embedding(embeddings, id)?;
        match cosine_similarity(&u, prototype) {
            Some(sim) => {
                similarities.insert(id, sim);
            }
            None => excluded.push(id),
        }
    }
    Ok(GistScoreTable {
        task,
        similarities,
        excluded,
    })
}

/// Candidate thresholds for a sample: midpoints between consecutive distinct
/// values of `{-1, values..., 1}`, plus one point beyond each end. Every
/// achievable count under a strict comparison is realized by one of them;
/// the outer points are needed when a similarity sits exactly on -1 or 1.
fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut points: Vec<f64> = values.to_vec();
    points.push(-1.0);
    points.push(1.0);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut out: Vec<f64> = points
        .windows(2)
        .map(|w| w[0] + (w[1] - w[0]) / 2.0)
        .collect();
    out.push(points[0] - 0.5);
    out.push(points[points.len() - 1] + 0.5);
    out
}

/// Chooses the threshold whose count is closest to `wanted`, preferring the
/// smaller count, then the earlier candidate.
fn best_threshold(values: &[f64], wanted: usize, count: impl Fn(f64) -> usize) -> f64 {
    let mut best: Option<(usize, usize, f64)> = None;
    for tau in candidate_thresholds(values) {
        let c = count(tau);
        let key = (c.abs_diff(wanted), c);
        match best {
            Some((d, bc, _)) if (d, bc) <= key => {}
            _ => best = Some((key.0, key.1, tau)),
        }
    }
    best.map(|(_, _, t)| t).unwrap_or(-1.0)
}

/// Calibrates `(tau_hp, tau_hn)` so that `#{Y=1 : sim < tau_hp} = n_hp` and
/// `#{Y=0 : sim > tau_hn} = n_hn`. With distinct similarities the counts are
/// met exactly at the midpoint of adjacent order statistics; with ties the
/// closest achievable count is used.
pub fn calibrate_tau(
    scores: &GistScoreTable,
    labels: &BTreeMap<ImageId, bool>,
    ce_counts: (usize, usize),
) -> Result<TauPair> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (id, &sim) in &scores.similarities {
        match labels.get(id) {
            Some(true) => pos.push(sim),
            Some(false) => neg.push(sim),
            None => return Err(Error::Coverage(format!("no label for image {id}"))),
        }
    }
    let (n_hp, n_hn) = ce_counts;
    if n_hp > pos.len() {
        return Err(Error::Calibration(format!(
            "{n_hp} hard positives requested but only {} scored positives",
            pos.len()
        )));
    }
    if n_hn > neg.len() {
        return Err(Error::Calibration(format!(
            "{n_hn} hard negatives requested but only {} scored negatives",
            neg.len()
        )));
    }
    let tau_hp = best_threshold(&pos, n_hp, |t| pos.iter().filter(|&&s| s < t).count());
    let tau_hn = best_threshold(&neg, n_hn, |t| neg.iter().filter(|&&s| s > t).count());
    Ok(TauPair { tau_hp, tau_hn })
}

/// Positives strictly below `tau_hp` and negatives strictly above `tau_hn`
/// are hard.
pub fn tag_gist_hardness(
    scores: &GistScoreTable,
    labels: &BTreeMap<ImageId, bool>,
    tau: TauPair,
) -> Result<HardnessTags> {
    let mut tags = BTreeMap::new();
    for (&id, &sim) in &scores.similarities {
        let positive = *labels
            .get(&id)
            .ok_or_else(|| Error::Coverage(format!("no label for image {id}")))?;
        let hard = if positive {
            sim < tau.tau_hp
        } else {
            sim > tau.tau_hn
        };
        tags.insert(id, Tag::from_label(positive, hard));
    }
    Ok(HardnessTags {
        task: scores.task,
        criterion: Criterion::Gist,
        params: MiningParams::Gist {
            tau_hp: tau.tau_hp,
            tau_hn: tau.tau_hn,
        },
        tags,
    })
}

/// Presence labels of `target` for `ids`.
pub fn presence_labels(
    store: &AnnotationStore,
    ids: &[ImageId],
    target: CategoryId,
) -> Result<BTreeMap<ImageId, bool>> {
    ids.iter()
        .map(|&id| Ok((id, store.is_present(id, target)?)))
        .collect()
}

/// Members of `ids` that have no similarity in `scores`.
pub fn unscored(scores: &GistScoreTable, ids: &[ImageId]) -> BTreeSet<ImageId> {
    ids.iter()
        .filter(|id| !scores.similarities.contains_key(id))
        .copied()
        .collect()
}
