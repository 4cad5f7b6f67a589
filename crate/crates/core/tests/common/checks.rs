//! Randomized comparisons between the crate and the oracles. Each check
//! returns `Err(description)` on the first mismatch.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ooc_forge::ce::{alpha_context_cues, context_scores as crate_scores, tag_ce_hardness};
use ooc_forge::dataset::{CategoryId, ImageId};
use ooc_forge::gist::{calibrate_tau, tag_gist_hardness, GistScoreTable};
use ooc_forge::metrics::{auc, ece, Prediction};
use ooc_forge::tags::Tag;
use ooc_forge::trainer::{
    loss_cvar, loss_erm, loss_focal, loss_gdro, loss_irm, loss_reweight, cvar_count,
    LabeledExample, LinearModel, LossKind, PenaltyNorm, TrainConfig, TrainingStats,
};
use ooc_forge::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{self, RawStore};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tag_name(t: Tag) -> &'static str {
    match t {
        Tag::HardPositive => "hard_positive",
        Tag::HardNegative => "hard_negative",
        Tag::EasyPositive => "easy_positive",
        Tag::EasyNegative => "easy_negative",
    }
}

/// Scores, cues and tags of every category of one random store. Returns the
/// number of (target) comparisons made.
pub fn ce_case(seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    let raw = RawStore::random(&mut r, 20, 6);
    let store = raw.build();
    let (train, eval) = raw.partition(&mut r);
    let alpha = [0.0, 0.05, 0.1, 0.2][r.random_range(0..4)];
    let beta = [0.0, 0.05, 0.1, 0.3][r.random_range(0..4)];
    let mut compared = 0;
    for &target in &raw.categories {
        let want = oracle::context_scores(&raw, &train, target);
        let got = crate_scores(&store, &train, CategoryId(target));
        let want = match (want, got) {
            (None, Err(Error::Undefined(_))) => continue,
            (None, other) => return Err(format!("seed {seed} target {target}: expected undefined, got {other:?}")),
            (Some(_), Err(e)) => return Err(format!("seed {seed} target {target}: {e}")),
            (Some(w), Ok(g)) => {
                let g: BTreeMap<u64, f64> = g.iter().map(|s| (s.cue.0, s.score)).collect();
                if g != w {
                    return Err(format!("seed {seed} target {target}: scores {g:?} vs {w:?}"));
                }
                w
            }
        };
        let want_cues = oracle::cues(&want, alpha);
        let cue_set = alpha_context_cues(&store, &train, CategoryId(target), alpha).map_err(|e| e.to_string())?;
        let got_cues: Vec<(u64, f64)> = cue_set.cues.iter().map(|&(c, s)| (c.0, s)).collect();
        if got_cues != want_cues {
            return Err(format!("seed {seed} target {target}: cues {got_cues:?} vs {want_cues:?}"));
        }
        let cue_ids: Vec<u64> = want_cues.iter().map(|c| c.0).collect();
        let want_tags = oracle::tags(&raw, &eval, target, &cue_ids, beta);
        let tags = tag_ce_hardness(&store, &eval, CategoryId(target), &cue_set, beta).map_err(|e| e.to_string())?;
        let got_tags: BTreeMap<u64, &str> = tags.tags.iter().map(|(id, &t)| (id.0, tag_name(t))).collect();
        if got_tags != want_tags {
            return Err(format!("seed {seed} target {target}: tags {got_tags:?} vs {want_tags:?}"));
        }
        compared += 1;
    }
    Ok(compared)
}

/// Similarities for `n` examples: distinct draws, or draws from a small
/// grid so that ties are common.
fn similarities(r: &mut impl Rng, n: usize, ties: bool) -> Vec<f64> {
    const GRID: [f64; 7] = [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0];
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if ties {
                    GRID[r.random_range(0..GRID.len())]
                } else {
                    r.random_range(-1.0..=1.0)
                }
            })
            .collect();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if ties || sorted.len() == v.len() {
            return v;
        }
    }
}

/// Calibrates thresholds on one random table and checks the hard counts.
pub fn gist_case(seed: u64, ties: bool) -> Result<(), String> {
    let mut r = rng(seed);
    let n_pos = r.random_range(0..=25);
    let n_neg = r.random_range(0..=25);
    let pos = similarities(&mut r, n_pos, ties);
    let neg = similarities(&mut r, n_neg, ties);
    let mut table = GistScoreTable {
        task: CategoryId(1),
        similarities: BTreeMap::new(),
        excluded: Vec::new(),
    };
    let mut labels = BTreeMap::new();
    for (i, &s) in pos.iter().chain(&neg).enumerate() {
        table.similarities.insert(ImageId(i as u64), s);
        labels.insert(ImageId(i as u64), i < n_pos);
    }
    let n_hp = r.random_range(0..=n_pos);
    let n_hn = r.random_range(0..=n_neg);
    let tau = calibrate_tau(&table, &labels, (n_hp, n_hn)).map_err(|e| format!("seed {seed}: {e}"))?;
    let counts = tag_gist_hardness(&table, &labels, tau)
        .map_err(|e| format!("seed {seed}: {e}"))?
        .counts();
    let best_hp = oracle::min_count_deviation(&pos, n_hp, true);
    let best_hn = oracle::min_count_deviation(&neg, n_hn, false);
    let (dev_hp, dev_hn) = (counts.hard_positive.abs_diff(n_hp), counts.hard_negative.abs_diff(n_hn));
    if !ties && (dev_hp, dev_hn) != (0, 0) {
        return Err(format!("seed {seed}: distinct similarities but deviations {dev_hp}, {dev_hn}"));
    }
    if dev_hp != best_hp || dev_hn != best_hn {
        return Err(format!(
            "seed {seed}: deviations ({dev_hp}, {dev_hn}), exhaustive scan gives ({best_hp}, {best_hn})"
        ));
    }
    Ok(())
}

fn random_model(r: &mut impl Rng, dim: usize, scale: f64) -> LinearModel {
    let params: Vec<f64> = (0..=dim).map(|_| r.random_range(-scale..scale)).collect();
    LinearModel::from_params(&params)
}

fn max_diff(a: &ooc_forge::trainer::Evaluated, value: f64, grad: &[f64]) -> f64 {
    a.grad
        .iter()
        .zip(grad)
        .map(|(x, y)| (x - y).abs())
        .fold((a.value - value).abs(), f64::max)
}

/// Largest difference, over value and gradient, between each reduced loss
/// and its closed form on one random batch.
pub fn reductions_case(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let n = r.random_range(1..=40);
    let dim = r.random_range(1..=5);
    let data = oracle::random_batch(&mut r, n, dim, 2.0);
    let model = random_model(&mut r, dim, 1.5);
    let l2 = [0.0, 1e-4, 0.1][r.random_range(0..3)];
    let batch: Vec<&LabeledExample> = data.iter().collect();
    let e = |x: ooc_forge::Result<ooc_forge::trainer::Evaluated>| x.map_err(|e| e.to_string());

    let erm = e(loss_erm(&model, &batch, l2))?;
    let mut worst: f64 = 0.0;

    let focal = e(loss_focal(&model, &batch, 0.0, l2))?;
    worst = worst.max(max_diff(&focal, erm.value, &erm.grad));
    let cvar = e(loss_cvar(&model, &batch, 1.0, l2))?;
    worst = worst.max(max_diff(&cvar, erm.value, &erm.grad));
    let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.05..1.0)).collect();
    let rw = e(loss_reweight(&model, &batch, &weights, 0.0, l2))?;
    worst = worst.max(max_diff(&rw, erm.value, &erm.grad));

    // one group: every example in the same environment
    let env = r.random_range(0..4u8);
    let one_group: Vec<LabeledExample> = data.iter().cloned().map(|mut x| {
        x.env = Some(env);
        x
    }).collect();
    let og: Vec<&LabeledExample> = one_group.iter().collect();
    let k = r.random_range(0.0..100.0);
    let n_c = r.random_range(1..500);
    let mut sizes = [0; 4];
    sizes[usize::from(env)] = n_c;
    let gdro = e(loss_gdro(&model, &og, k, &sizes, l2))?;
    worst = worst.max(max_diff(&gdro, erm.value + k / (n_c as f64).sqrt(), &erm.grad));

    // IRM without penalty: sum of per-environment ERM losses
    let irm = e(loss_irm(&model, &batch, 0.0, PenaltyNorm::Squared, l2))?;
    let mut value = 0.0;
    let mut grad = vec![0.0; model.num_params()];
    for c in 0..4u8 {
        let members: Vec<&LabeledExample> = data.iter().filter(|x| x.env == Some(c)).collect();
        if members.is_empty() {
            continue;
        }
        let part = e(loss_erm(&model, &members, 0.0))?;
        value += part.value;
        grad.iter_mut().zip(&part.grad).for_each(|(g, p)| *g += p);
    }
    value += l2 * model.weight_norm_sq();
    for (g, w) in grad.iter_mut().zip(&model.weights) {
        *g += 2.0 * l2 * w;
    }
    worst = worst.max(max_diff(&irm, value, &grad));
    Ok(worst)
}

/// Relative-error denominator floor for the finite-difference comparison,
/// per unit of objective value. Central differences at h = 1e-6 carry about
/// `1e-10 * |f|` of absolute rounding noise, so coordinates whose derivative
/// is below `GRAD_FLOOR * max(1, |f|)` are compared on that absolute scale.
pub const GRAD_FLOOR: f64 = 1e-4;
pub const GRAD_H: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-5;

fn single_losses(model: &LinearModel, batch: &[&LabeledExample]) -> Vec<f64> {
    batch
        .iter()
        .map(|&x| loss_erm(model, &[x], 0.0).unwrap().value)
        .collect()
}

/// Whether the active piece of a piecewise objective is separated by more
/// than `margin`, so that the finite differences stay on one piece.
fn stable(cfg: &TrainConfig, model: &LinearModel, batch: &[&LabeledExample], stats: &TrainingStats, margin: f64) -> bool {
    match cfg.loss_kind {
        LossKind::Gdro => {
            let k = cfg.hyper.unwrap();
            let mut values: Vec<f64> = (0..4u8)
                .filter_map(|c| {
                    let members: Vec<&LabeledExample> =
                        batch.iter().copied().filter(|x| x.env == Some(c)).collect();
                    if members.is_empty() {
                        return None;
                    }
                    let l = loss_erm(model, &members, 0.0).unwrap().value;
                    Some(l + k / (stats.env_counts[usize::from(c)] as f64).sqrt())
                })
                .collect();
            values.sort_by(|a, b| b.total_cmp(a));
            values.len() < 2 || values[0] - values[1] > margin
        }
        LossKind::Cvar => {
            let mut losses = single_losses(model, batch);
            losses.sort_by(|a, b| b.total_cmp(a));
            let m = cvar_count(cfg.hyper.unwrap(), losses.len());
            m == losses.len() || losses[m - 1] - losses[m] > margin
        }
        _ => true,
    }
}

/// Checks one loss configuration's gradient on a random (model, batch).
/// `Ok(None)` when the draw is skipped as argmax-unstable, otherwise the
/// largest per-coordinate relative error.
pub fn grad_case(seed: u64, kind: LossKind) -> Result<Option<f64>, String> {
    let mut r = rng(seed);
    let n = r.random_range(4..=24);
    let dim = r.random_range(1..=4);
    let data = oracle::random_batch(&mut r, n, dim, 1.0);
    let model = random_model(&mut r, dim, 1.0);
    let grid = kind.default_grid();
    let hyper = (!grid.is_empty()).then(|| grid[r.random_range(0..grid.len())]);
    let mut cfg = TrainConfig::default().with_loss(kind, hyper);
    cfg.l2 = [0.0, 1e-4, 0.05][r.random_range(0..3)];
    let batch: Vec<&LabeledExample> = data.iter().collect();
    let stats = TrainingStats::from_examples(&data);
    if !stable(&cfg, &model, &batch, &stats, 1e-4) {
        return Ok(None);
    }
    let analytic = cfg.objective(&model, &batch, &stats).map_err(|e| e.to_string())?;
    let theta = model.params();
    let numeric = oracle::numeric_grad(&theta, GRAD_H, |t| {
        cfg.objective(&LinearModel::from_params(t), &batch, &stats).unwrap().value
    });
    let floor = GRAD_FLOOR * analytic.value.abs().max(1.0);
    let worst = analytic
        .grad
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| oracle::rel_err(a, n, floor))
        .fold(0.0, f64::max);
    Ok(Some(worst))
}

fn predictions(scores: &[f64], labels: &[bool]) -> Vec<Prediction> {
    scores
        .iter()
        .zip(labels)
        .map(|(&score, &label)| Prediction { score, label })
        .collect()
}

/// Random scores on a coarse grid (many ties and bin edges) or uniform.
pub fn random_scores(r: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let coarse = r.random_bool(0.5);
    let levels = r.random_range(2..=30);
    let scores = (0..n)
        .map(|_| {
            if coarse {
                r.random_range(0..=levels) as f64 / levels as f64
            } else {
                r.random_range(0.0..=1.0)
            }
        })
        .collect();
    let labels = (0..n).map(|_| r.random_bool(0.4)).collect();
    (scores, labels)
}

pub fn auc_case(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(2..=200);
    let (scores, mut labels) = random_scores(&mut r, n);
    labels[0] = true;
    labels[1] = false;
    let want = oracle::auc_pairs(&scores, &labels).unwrap();
    let got = auc(&predictions(&scores, &labels)).map_err(|e| e.to_string())?;
    if got != want {
        return Err(format!("seed {seed}: rank AUC {got} vs pair count {want}"));
    }
    Ok(())
}

pub fn ece_case(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let n = r.random_range(1..=200);
    let bins = r.random_range(1..=20);
    let (scores, labels) = random_scores(&mut r, n);
    let want = oracle::ece_brute(&scores, &labels, bins);
    let got = ece(&predictions(&scores, &labels), bins).map_err(|e| e.to_string())?;
    Ok((got - want).abs())
}

/// Scores at the centres of 4 bins, each bin's positive rate equal to its
/// centre; every quantity is dyadic, so the ECE is exactly 0.
pub fn calibrated_ece() -> f64 {
    let mut preds = Vec::new();
    for k in 0..4 {
        let centre = (2 * k + 1) as f64 / 8.0;
        for i in 0..8 {
            preds.push(Prediction {
                score: centre,
                label: i < 2 * k + 1,
            });
        }
    }
    ece(&preds, 4).unwrap()
}
