//! Brute-force reference implementations, written from the definitions
//! without calling into the crate's algorithms.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ooc_forge::dataset::{
    AnnotationStore, Category, CategoryId, CategoryKind, CategoryTable, ImageId, ImageRecord,
    InstanceAnnotation,
};
use ooc_forge::trainer::LabeledExample;
use rand::Rng;

/// A store as plain lists; ids are `1..=n`.
#[derive(Debug, Clone)]
pub struct RawStore {
    /// (id, width, height)
    pub images: Vec<(u64, u32, u32)>,
    pub categories: Vec<u64>,
    /// (image, category, pixel area), in file order
    pub annotations: Vec<(u64, u64, f64)>,
}

impl RawStore {
    pub fn random(rng: &mut impl Rng, max_images: usize, max_categories: usize) -> Self {
        let n_images = rng.random_range(2..=max_images);
        let n_cats = rng.random_range(2..=max_categories);
        let images: Vec<(u64, u32, u32)> = (1..=n_images as u64)
            .map(|id| (id, rng.random_range(1..=8), rng.random_range(1..=8)))
            .collect();
        let categories: Vec<u64> = (1..=n_cats as u64).collect();
        let mut annotations = Vec::new();
        for &(img, w, h) in &images {
            for &cat in &categories {
                if rng.random_bool(0.45) {
                    for _ in 0..rng.random_range(1..=2) {
                        // integer pixel areas up to the full image
                        let area = rng.random_range(0..=w * h) as f64;
                        annotations.push((img, cat, area));
                    }
                }
            }
        }
        // shuffle file order a little
        for i in (1..annotations.len()).rev() {
            let j = rng.random_range(0..=i);
            annotations.swap(i, j);
        }
        RawStore {
            images,
            categories,
            annotations,
        }
    }

    pub fn build(&self) -> AnnotationStore {
        let cats = CategoryTable::new(self.categories.iter().map(|&id| Category {
            id: CategoryId(id),
            name: format!("cat{id}"),
            kind: CategoryKind::Thing,
        }))
        .unwrap();
        AnnotationStore::from_parts(
            self.images.iter().map(|&(id, width, height)| ImageRecord {
                id: ImageId(id),
                width,
                height,
            }),
            cats,
            self.annotations.iter().map(|&(img, cat, a)| InstanceAnnotation {
                image_id: ImageId(img),
                category_id: CategoryId(cat),
                pixel_area: a,
            }),
        )
        .unwrap()
    }

    pub fn area(&self, image: u64, cat: u64) -> f64 {
        let &(_, w, h) = self.images.iter().find(|i| i.0 == image).unwrap();
        let mut sum = 0.0;
        for &(img, c, a) in &self.annotations {
            if img == image && c == cat {
                sum += a;
            }
        }
        sum / (f64::from(w) * f64::from(h))
    }

    /// Random train/eval partition; train gets at least one image.
    pub fn partition(&self, rng: &mut impl Rng) -> (Vec<ImageId>, Vec<ImageId>) {
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for &(id, _, _) in &self.images {
            if rng.random_bool(0.6) {
                train.push(ImageId(id));
            } else {
                eval.push(ImageId(id));
            }
        }
        if train.is_empty() {
            train.push(eval.remove(0));
        }
        (train, eval)
    }
}

/// Every cue's score for `target`, or `None` without training positives.
pub fn context_scores(raw: &RawStore, train: &[ImageId], target: u64) -> Option<BTreeMap<u64, f64>> {
    let positives: Vec<u64> = train
        .iter()
        .map(|i| i.0)
        .filter(|&i| raw.area(i, target) > 0.0)
        .collect();
    if positives.is_empty() {
        return None;
    }
    let mut out = BTreeMap::new();
    for &c in &raw.categories {
        if c == target {
            continue;
        }
        let mut sum = 0.0;
        for &i in &positives {
            sum += raw.area(i, c) - raw.area(i, target);
        }
        out.insert(c, sum / positives.len() as f64);
    }
    Some(out)
}

pub fn cues(scores: &BTreeMap<u64, f64>, alpha: f64) -> Vec<(u64, f64)> {
    let mut kept: Vec<(u64, f64)> = scores
        .iter()
        .filter(|(_, &s)| s > alpha)
        .map(|(&c, &s)| (c, s))
        .collect();
    // selection sort: largest score first, smaller id among equals
    let mut out = Vec::new();
    while !kept.is_empty() {
        let mut best = 0;
        for i in 1..kept.len() {
            let (c, s) = kept[i];
            let (bc, bs) = kept[best];
            if s > bs || (s == bs && c < bc) {
                best = i;
            }
        }
        out.push(kept.remove(best));
    }
    out
}

/// `"hard_positive"`, ... per eval image, applying the two rules literally.
pub fn tags(raw: &RawStore, eval: &[ImageId], target: u64, cues: &[u64], beta: f64) -> BTreeMap<u64, &'static str> {
    let mut out = BTreeMap::new();
    for id in eval {
        let i = id.0;
        let positive = raw.area(i, target) > 0.0;
        let tag = if positive {
            let mut all_small = !cues.is_empty();
            for &c in cues {
                if raw.area(i, c) >= beta {
                    all_small = false;
                }
            }
            if all_small {
                "hard_positive"
            } else {
                "easy_positive"
            }
        } else {
            let mut some_big = false;
            for &c in cues {
                if raw.area(i, c) > beta {
                    some_big = true;
                }
            }
            if some_big {
                "hard_negative"
            } else {
                "easy_negative"
            }
        };
        out.insert(i, tag);
    }
    out
}

/// Smallest `|count - n|` reachable by any threshold, where `count` is the
/// number of values strictly below (`below = true`) or strictly above the
/// threshold.
pub fn min_count_deviation(values: &[f64], n: usize, below: bool) -> usize {
    let mut candidates = vec![f64::NEG_INFINITY, f64::INFINITY];
    for &v in values {
        candidates.push(v);
        candidates.push(next_up(v));
        candidates.push(next_down(v));
    }
    candidates
        .iter()
        .map(|&t| {
            let count = values
                .iter()
                .filter(|&&v| if below { v < t } else { v > t })
                .count();
            count.abs_diff(n)
        })
        .min()
        .unwrap()
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Equal-width bins on [0, 1], right-closed except the first, found by a
/// linear scan.
pub fn ece_brute(scores: &[f64], labels: &[bool], bins: usize) -> f64 {
    let b = bins as f64;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &s) in scores.iter().enumerate() {
        let k = (0..bins)
            .find(|&k| {
                let lo = k as f64 / b;
                let hi = (k + 1) as f64 / b;
                let above_lo = if k == 0 { s >= 0.0 } else { s > lo };
                above_lo && (s <= hi || k == bins - 1)
            })
            .unwrap();
        members[k].push(i);
    }
    let n = scores.len() as f64;
    let mut total = 0.0;
    for m in members.iter().filter(|m| !m.is_empty()) {
        let c = m.len() as f64;
        let conf: f64 = m.iter().map(|&i| scores[i]).sum::<f64>() / c;
        let acc: f64 = m.iter().map(|&i| f64::from(u8::from(labels[i]))).sum::<f64>() / c;
        total += c / n * (conf - acc).abs();
    }
    total
}

pub fn random_batch(rng: &mut impl Rng, n: usize, dim: usize, scale: f64) -> Vec<LabeledExample> {
    (0..n)
        .map(|i| {
            let y = rng.random_bool(0.5);
            LabeledExample {
                id: Some(ImageId(i as u64)),
                features: (0..dim).map(|_| rng.random_range(-scale..scale)).collect(),
                y,
                env: Some(2 * u8::from(y) + u8::from(rng.random_bool(0.5))),
            }
        })
        .collect()
}

/// Central differences of `f` around `theta`.
pub fn numeric_grad(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for j in 0..theta.len() {
        t[j] = theta[j] + h;
        let up = f(&t);
        t[j] = theta[j] - h;
        let down = f(&t);
        t[j] = theta[j];
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}
