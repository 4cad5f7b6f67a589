//! Out-of-context challenge-set mining and robust-loss evaluation.
//!
//! The crate covers the whole pipeline:
//!
//! 1. [`dataset`]: COCO-format annotations, caption embeddings and seeded
//!    train/valid/test splits.
//! 2. [`ce`]: context cues from co-occurrence and relative area, and the
//!    resulting hard positives/negatives.
//! 3. [`gist`]: hard examples by caption-embedding distance to the class
//!    prototype, calibrated to the CE counts.
//! 4. [`challenge`]: task scoring and selection, label-by-cue environments
//!    and the challenge-set file format.
//! 5. [`trainer`]: ERM, label/environment reweighting and undersampling,
//!    GDRO, IRM, CVaR and focal loss for a linear-logistic model, with
//!    seeded momentum SGD and min-max hyperparameter selection.
//! 6. [`metrics`]: AUC, error, NLL and ECE broken down by hard/easy subsets.
//!
//! The `ooc-forge` binary wires these together; see [`cli`].

pub mod ce;
pub mod challenge;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gist;
pub mod io;
pub mod metrics;
pub mod tags;
pub mod trainer;

pub use error::{Error, Result};
