//! Linear-logistic training under the robust losses.

mod config;
mod data;
mod losses;
mod model;
mod rng;
mod sgd;
mod sweep;
mod synth;

pub use config::{LossKind, SweepGrid, TrainConfig};
pub use data::{load_examples, validate_examples, LabeledExample, TrainingStats, NUM_ENVS};
pub use losses::{
    cvar_count, draw_undersample_indices, irm_penalty, loss_cvar, loss_erm, loss_focal, loss_gdro,
    loss_irm, loss_reweight, Evaluated, PenaltyNorm,
};
pub use model::{sigmoid, LinearModel};
pub use sgd::{mean_nll, train, EpochRecord, TrainOutcome};
pub use sweep::{
    hard_nlls, select_min_max, sweep_and_select, ConfigReport, RunReport, SweepOutcome,
    SweepReport, DEFAULT_SWEEP_SEEDS,
};
pub use synth::{synth_spurious_dataset, synth_tags, worst_env_error, SYNTH_NOISE_DIMS};
