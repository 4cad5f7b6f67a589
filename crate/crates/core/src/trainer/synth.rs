//! Synthetic data with a spurious feature, for desk-scale robustness checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::{env_of, LabeledExample, NUM_ENVS};
use super::model::LinearModel;
use crate::challenge::env_code;
use crate::dataset::ImageId;
use crate::error::{Error, Result};
use crate::tags::Tag;

pub const SYNTH_NOISE_DIMS: usize = 3;

/// Draws `n` examples with balanced labels and features
/// `[core, spurious, noise...]`:
///
/// - `core = (2y - 1) * core_strength + N(0, 1)`
/// - `spurious = (2a - 1) * spurious_strength + N(0, 1)`, where `a = y` except
///   on a `minority_fraction` of examples, where `a = 1 - y`
/// - `SYNTH_NOISE_DIMS` standard normal dimensions.
///
/// The environment is `2y + [a == y]`; ids count up from 0.
pub fn synth_spurious_dataset(
    seed: u64,
    n: usize,
    core_strength: f64,
    spurious_strength: f64,
    minority_fraction: f64,
) -> Result<Vec<LabeledExample>> {
    if !(minority_fraction > 0.0 && minority_fraction < 1.0) {
        return Err(Error::Config(format!(
            "minority fraction {minority_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let y: bool = rng.random_bool(0.5);
        let agrees = !rng.random_bool(minority_fraction);
        let a = if agrees { y } else { !y };
        let sign = |b: bool| if b { 1.0 } else { -1.0 };
        let mut features = Vec::with_capacity(2 + SYNTH_NOISE_DIMS);
        features.push(sign(y) * core_strength + rng.sample::<f64, _>(StandardNormal));
        features.push(sign(a) * spurious_strength + rng.sample::<f64, _>(StandardNormal));
        for _ in 0..SYNTH_NOISE_DIMS {
            features.push(rng.sample::<f64, _>(StandardNormal));
        }
        out.push(LabeledExample {
            id: Some(ImageId(i as u64)),
            features,
            y,
            env: Some(env_code(y, agrees)),
        });
    }
    Ok(out)
}

/// Minority examples (spurious feature disagreeing with the label) are hard.
pub fn synth_tags(data: &[LabeledExample]) -> Vec<Tag> {
    data.iter()
        .map(|e| {
            let agrees = e.env.is_some_and(|env| env % 2 == 1);
            Tag::from_label(e.y, !agrees)
        })
        .collect()
}

/// Largest per-environment error rate at threshold 0.5, with a tie predicting
/// negative. Environments absent from `data` are skipped.
pub fn worst_env_error(model: &LinearModel, data: &[LabeledExample]) -> Result<f64> {
    let mut wrong = [0usize; NUM_ENVS];
    let mut total = [0usize; NUM_ENVS];
    for e in data {
        let env = usize::from(env_of(e)?);
        total[env] += 1;
        if (model.predict(&e.features) > 0.5) != e.y {
            wrong[env] += 1;
        }
    }
    wrong
        .iter()
        .zip(&total)
        .filter(|(_, &t)| t > 0)
        .map(|(&w, &t)| w as f64 / t as f64)
        .max_by(f64::total_cmp)
        .ok_or_else(|| Error::Undefined("worst-environment error of an empty set".into()))
}
