use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{LabeledExample, TrainingStats};
use super::losses::{
    loss_cvar, loss_erm, loss_focal, loss_gdro, loss_irm, loss_reweight, Evaluated, PenaltyNorm,
};
use super::model::LinearModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "ERM")]
    Erm,
    ReweightLabel,
    UndersampleLabel,
    ReweightEnv,
    UndersampleEnv,
    #[serde(rename = "GDRO")]
    Gdro,
    #[serde(rename = "IRM")]
    Irm,
    #[serde(rename = "CVaR")]
    Cvar,
    Focal,
}

impl LossKind {
    pub const ALL: [LossKind; 9] = [
        LossKind::Erm,
        LossKind::ReweightLabel,
        LossKind::UndersampleLabel,
        LossKind::ReweightEnv,
        LossKind::UndersampleEnv,
        LossKind::Gdro,
        LossKind::Irm,
        LossKind::Cvar,
        LossKind::Focal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Erm => "ERM",
            LossKind::ReweightLabel => "ReweightLabel",
            LossKind::UndersampleLabel => "UndersampleLabel",
            LossKind::ReweightEnv => "ReweightEnv",
            LossKind::UndersampleEnv => "UndersampleEnv",
            LossKind::Gdro => "GDRO",
            LossKind::Irm => "IRM",
            LossKind::Cvar => "CVaR",
            LossKind::Focal => "Focal",
        }
    }

    pub fn needs_env(self) -> bool {
        matches!(
            self,
            LossKind::ReweightEnv | LossKind::UndersampleEnv | LossKind::Gdro | LossKind::Irm
        )
    }

    pub fn is_undersampling(self) -> bool {
        matches!(self, LossKind::UndersampleLabel | LossKind::UndersampleEnv)
    }

    /// Hyperparameter values swept for this loss.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            LossKind::Erm => vec![],
            LossKind::Gdro => vec![5.0, 30.0, 60.0, 240.0],
            LossKind::Irm => vec![0.1, 1.0, 3.0, 10.0],
            LossKind::Cvar => vec![0.05, 0.1, 0.15],
            LossKind::Focal => vec![0.2, 0.5, 0.7, 1.0],
            LossKind::ReweightLabel | LossKind::UndersampleLabel | LossKind::UndersampleEnv => {
                vec![0.2, 0.5, 0.7, 1.0]
            }
            LossKind::ReweightEnv => vec![0.5, 1.0, 1.5, 2.0],
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown loss kind {s:?}")))
    }
}

fn default_lr() -> f64 {
    1e-4
}
fn default_momentum() -> f64 {
    0.9
}
fn default_l2() -> f64 {
    1e-4
}
fn default_batch_size() -> usize {
    32
}
fn default_max_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    3
}

/// Loss and optimizer settings for one training run. Missing JSON fields
/// take the defaults of [`TrainConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    /// alpha, K, lambda, p or gamma depending on `loss_kind`; unused by ERM.
    #[serde(default)]
    pub hyper: Option<f64>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub irm_penalty: PenaltyNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::Erm,
            hyper: None,
            lr: default_lr(),
            momentum: default_momentum(),
            l2: default_l2(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
            irm_penalty: PenaltyNorm::Squared,
        }
    }
}

impl TrainConfig {
    pub fn with_loss(mut self, kind: LossKind, hyper: Option<f64>) -> Self {
        self.loss_kind = kind;
        self.hyper = hyper;
        self
    }

    pub fn hyper_value(&self) -> Result<f64> {
        self.hyper.ok_or_else(|| {
            Error::Config(format!("{} needs a hyperparameter", self.loss_kind))
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr {} must be finite and >= 0", self.lr));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad(format!("l2 {} must be >= 0", self.l2));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.loss_kind == LossKind::Erm {
            return Ok(());
        }
        let h = self.hyper_value()?;
        let ok = match self.loss_kind {
            LossKind::Cvar => h > 0.0 && h <= 1.0,
            _ => h.is_finite() && h >= 0.0,
        };
        if !ok {
            return bad(format!("hyperparameter {h} out of range for {}", self.loss_kind));
        }
        Ok(())
    }

    /// Evaluates this configuration's objective on one mini-batch. The
    /// undersampling losses are plain ERM here; their reweighting happens
    /// when the epoch's indices are drawn.
    pub fn objective(
        &self,
        model: &LinearModel,
        batch: &[&LabeledExample],
        stats: &TrainingStats,
    ) -> Result<Evaluated> {
        let l2 = self.l2;
        match self.loss_kind {
            LossKind::Erm | LossKind::UndersampleLabel | LossKind::UndersampleEnv => {
                loss_erm(model, batch, l2)
            }
            LossKind::ReweightLabel => {
                let w: Vec<f64> = batch.iter().map(|e| stats.label_weight(e.y)).collect();
                loss_reweight(model, batch, &w, self.hyper_value()?, l2)
            }
            LossKind::ReweightEnv => {
                let w = batch
                    .iter()
                    .map(|e| Ok(stats.env_weight(super::data::env_of(e)?)))
                    .collect::<Result<Vec<f64>>>()?;
                loss_reweight(model, batch, &w, self.hyper_value()?, l2)
            }
            LossKind::Gdro => loss_gdro(model, batch, self.hyper_value()?, &stats.env_counts, l2),
            LossKind::Irm => loss_irm(model, batch, self.hyper_value()?, self.irm_penalty, l2),
            LossKind::Cvar => loss_cvar(model, batch, self.hyper_value()?, l2),
            LossKind::Focal => loss_focal(model, batch, self.hyper_value()?, l2),
        }
    }
}

/// Hyperparameter values per loss kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepGrid {
    pub values: BTreeMap<LossKind, Vec<f64>>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            values: LossKind::ALL
                .into_iter()
                .map(|k| (k, k.default_grid()))
                .collect(),
        }
    }
}

impl SweepGrid {
    /// The hyper values to run for `kind`: `[None]` for ERM, otherwise one
    /// entry per grid value.
    pub fn configs(&self, kind: LossKind) -> Vec<Option<f64>> {
        if kind == LossKind::Erm {
            return vec![None];
        }
        self.values
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| kind.default_grid())
            .into_iter()
            .map(Some)
            .collect()
    }
}
