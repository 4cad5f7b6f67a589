use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::ImageId;
use crate::error::{Error, Result};
use crate::io::read_jsonl;

/// One training or evaluation row: features, a binary label and, for the
/// environment-based losses, an environment in `0..4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ImageId>,
    pub features: Vec<f64>,
    #[serde(serialize_with = "label_ser", deserialize_with = "label_de")]
    pub y: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<u8>,
}

fn label_ser<S: Serializer>(y: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*y))
}

fn label_de<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
    }
}

pub const NUM_ENVS: usize = 4;

/// Label and environment frequencies of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub n: usize,
    pub label_counts: [usize; 2],
    pub env_counts: [usize; NUM_ENVS],
}

impl TrainingStats {
    pub fn from_examples(examples: &[LabeledExample]) -> Self {
        let mut label_counts = [0; 2];
        let mut env_counts = [0; NUM_ENVS];
        for ex in examples {
            label_counts[usize::from(ex.y)] += 1;
            if let Some(e) = ex.env {
                if let Some(c) = env_counts.get_mut(usize::from(e)) {
                    *c += 1;
                }
            }
        }
        TrainingStats {
            n: examples.len(),
            label_counts,
            env_counts,
        }
    }

    /// `P(Y = y)` on the training set.
    pub fn label_weight(&self, y: bool) -> f64 {
        self.label_counts[usize::from(y)] as f64 / self.n as f64
    }

    /// `P(C = c)` on the training set.
    pub fn env_weight(&self, env: u8) -> f64 {
        self.env_counts[usize::from(env)] as f64 / self.n as f64
    }
}

pub(crate) fn env_of(ex: &LabeledExample) -> Result<u8> {
    match ex.env {
        Some(e) if usize::from(e) < NUM_ENVS => Ok(e),
        Some(e) => Err(Error::Config(format!("environment {e} outside 0..4"))),
        None => Err(Error::Config(
            "environment label required by the configured loss".into(),
        )),
    }
}

/// Checks that every row has the same positive feature dimension, finite
/// features and an environment in range when present.
pub fn validate_examples(examples: &[LabeledExample]) -> Result<usize> {
    let dim = examples
        .first()
        .map(|e| e.features.len())
        .ok_or_else(|| Error::Config("empty dataset".into()))?;
    for (i, ex) in examples.iter().enumerate() {
        let line = i + 1;
        if ex.features.len() != dim || dim == 0 {
            return Err(Error::Format {
                line,
                message: format!("expected {dim} features, got {}", ex.features.len()),
            });
        }
        if ex.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format {
                line,
                message: "non-finite feature".into(),
            });
        }
        if let Some(e) = ex.env {
            if usize::from(e) >= NUM_ENVS {
                return Err(Error::Format {
                    line,
                    message: format!("environment {e} outside 0..4"),
                });
            }
        }
    }
    Ok(dim)
}

pub fn load_examples(path: &Path) -> Result<Vec<LabeledExample>> {
    let rows: Vec<LabeledExample> = read_jsonl(path)?;
    validate_examples(&rows)?;
    Ok(rows)
}
