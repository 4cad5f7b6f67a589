//! Hyperparameter sweeps with min-max selection on hard validation examples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LossKind, SweepGrid, TrainConfig};
use super::data::LabeledExample;
use super::model::LinearModel;
use super::sgd::train;
use crate::error::{Error, Result};
use crate::metrics::xent;
use crate::tags::Tag;

pub const DEFAULT_SWEEP_SEEDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub hp_nll: f64,
    pub hn_nll: f64,
    pub maxloss: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub loss_kind: LossKind,
    pub hyper: Option<f64>,
    /// Seed means of the per-run values.
    pub hp_nll: f64,
    pub hn_nll: f64,
    pub maxloss: f64,
    pub selected: bool,
    pub runs: Vec<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub configs: Vec<ConfigReport>,
    pub best: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: SweepReport,
    /// Trained models, `models[config][seed]`, in grid order.
    pub models: Vec<Vec<LinearModel>>,
}

impl SweepOutcome {
    pub fn best_index(&self) -> usize {
        self.report
            .configs
            .iter()
            .position(|c| c.selected)
            .expect("a sweep always selects one config")
    }

    pub fn best_models(&self) -> &[LinearModel] {
        &self.models[self.best_index()]
    }
}

/// Index minimizing `max(hp, hn)`; the earliest entry wins ties.
pub fn select_min_max(points: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &(hp, hn)) in points.iter().enumerate() {
        let m = hp.max(hn);
        if best.is_none_or(|(_, b)| m < b) {
            best = Some((i, m));
        }
    }
    best.map(|(i, _)| i)
}

/// Mean validation NLL on hard positives and on hard negatives.
pub fn hard_nlls(model: &LinearModel, valid: &[LabeledExample], tags: &[Tag]) -> Result<(f64, f64)> {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (ex, &tag) in valid.iter().zip(tags) {
        let slot = match tag {
            Tag::HardPositive => 0,
            Tag::HardNegative => 1,
            _ => continue,
        };
        sums[slot] += xent(model.predict(&ex.features), ex.y);
        counts[slot] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Undefined(format!(
            "selection needs hard positives and hard negatives in validation ({} / {})",
            counts[0], counts[1]
        )));
    }
    Ok((sums[0] / counts[0] as f64, sums[1] / counts[1] as f64))
}

/// Trains every grid value of `kind` under `n_seeds` seeds (`base.seed`,
/// `base.seed + 1`, ...) and selects the config whose seed-mean
/// `max(hard-positive NLL, hard-negative NLL)` on validation is smallest.
/// `valid_tags[i]` tags `valid[i]`. Runs are independent and execute on the
/// current rayon pool.
pub fn sweep_and_select(
    base: &TrainConfig,
    kind: LossKind,
    grid: &SweepGrid,
    n_seeds: usize,
    train_data: &[LabeledExample],
    valid: &[LabeledExample],
    valid_tags: &[Tag],
) -> Result<SweepOutcome> {
    if valid_tags.len() != valid.len() {
        return Err(Error::Coverage(format!(
            "{} validation tags for {} validation examples",
            valid_tags.len(),
            valid.len()
        )));
    }
    if n_seeds == 0 {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    let hypers = grid.configs(kind);
    if hypers.is_empty() {
        return Err(Error::Config(format!("empty grid for {kind}")));
    }
    let jobs: Vec<(usize, TrainConfig)> = hypers
        .iter()
        .enumerate()
        .flat_map(|(ci, &h)| {
            (0..n_seeds as u64).map(move |s| {
                let mut cfg = base.clone().with_loss(kind, h);
                cfg.seed = base.seed.wrapping_add(s);
                (ci, cfg)
            })
        })
        .collect();

    let results: Vec<Result<(usize, RunReport, LinearModel)>> = jobs
        .par_iter()
        .map(|(ci, cfg)| {
            let out = train(cfg, train_data, valid)?;
            let (hp, hn) = hard_nlls(&out.model, valid, valid_tags)?;
            Ok((
                *ci,
                RunReport {
                    seed: cfg.seed,
                    hp_nll: hp,
                    hn_nll: hn,
                    maxloss: hp.max(hn),
                    best_epoch: out.best_epoch,
                },
                out.model,
            ))
        })
        .collect();

    let mut runs: Vec<Vec<RunReport>> = vec![Vec::new(); hypers.len()];
    let mut models: Vec<Vec<LinearModel>> = vec![Vec::new(); hypers.len()];
    for r in results {
        let (ci, run, model) = r?;
        runs[ci].push(run);
        models[ci].push(model);
    }

    let mut configs: Vec<ConfigReport> = hypers
        .iter()
        .zip(runs)
        .map(|(&hyper, runs)| {
            let n = runs.len() as f64;
            let hp = runs.iter().map(|r| r.hp_nll).sum::<f64>() / n;
            let hn = runs.iter().map(|r| r.hn_nll).sum::<f64>() / n;
            ConfigReport {
                loss_kind: kind,
                hyper,
                hp_nll: hp,
                hn_nll: hn,
                maxloss: hp.max(hn),
                selected: false,
                runs,
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = configs.iter().map(|c| (c.hp_nll, c.hn_nll)).collect();
    let best = select_min_max(&points).expect("grid is nonempty");
    configs[best].selected = true;
    let best_config = base.clone().with_loss(kind, configs[best].hyper);

    Ok(SweepOutcome {
        report: SweepReport {
            configs,
            best: best_config,
        },
        models,
    })
}
