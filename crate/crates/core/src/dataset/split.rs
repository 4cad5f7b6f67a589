//! Seeded train/validation/test partitioning.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ImageId;
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Valid,
    Test,
}

impl fmt::Display for SplitPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitPart::Train => "train",
            SplitPart::Valid => "valid",
            SplitPart::Test => "test",
        })
    }
}

impl FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "valid" | "validation" | "val" => Ok(SplitPart::Valid),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::Config(format!("unknown split part {other:?}"))),
        }
    }
}

/// Disjoint train/valid/test image sets. Each list is kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<ImageId>,
    pub valid: Vec<ImageId>,
    pub test: Vec<ImageId>,
}

impl DatasetSplit {
    pub fn part(&self, part: SplitPart) -> &[ImageId] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Valid => &self.valid,
            SplitPart::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Config(format!("ratios must be positive: {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ratios must sum to 1, got {sum}")));
    }
    Ok(())
}

// floor(count * ratio), robust to products like 0.2 * 5 landing just under an integer
fn floor_share(count: usize, ratio: f64) -> usize {
    (count as f64 * ratio + 1e-9).floor() as usize
}

/// Shuffles `ids` with a ChaCha8 permutation seeded by `seed`, then cuts the
/// validation and test shares by floor rounding; the remainder goes to train.
/// The result depends only on the id set, the ratios and the seed.
pub fn make_split(ids: &[ImageId], ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    validate_ratios(ratios)?;
    let mut shuffled = ids.to_vec();
    shuffled.sort_unstable();
    shuffled.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = shuffled.len();
    let n_valid = floor_share(n, ratios[1]);
    let n_test = floor_share(n, ratios[2]);
    let n_train = n - n_valid - n_test;

    let mut train = shuffled[..n_train].to_vec();
    let mut valid = shuffled[n_train..n_train + n_valid].to_vec();
    let mut test = shuffled[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        seed,
        ratios,
        train,
        valid,
        test,
    })
}
