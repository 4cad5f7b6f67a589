//! Hard/easy labelling shared by both mining criteria.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryId, ImageId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "CE")]
    Ce,
    Gist,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Ce => "CE",
            Criterion::Gist => "Gist",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MiningParams {
    Ce { alpha: f64, beta: f64 },
    Gist { tau_hp: f64, tau_hn: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    HardPositive,
    HardNegative,
    EasyPositive,
    EasyNegative,
}

impl Tag {
    pub fn is_hard(self) -> bool {
        matches!(self, Tag::HardPositive | Tag::HardNegative)
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Tag::HardPositive | Tag::EasyPositive)
    }

    pub fn from_label(positive: bool, hard: bool) -> Tag {
        match (positive, hard) {
            (true, true) => Tag::HardPositive,
            (true, false) => Tag::EasyPositive,
            (false, true) => Tag::HardNegative,
            (false, false) => Tag::EasyNegative,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCounts {
    pub hard_positive: usize,
    pub hard_negative: usize,
    pub easy_positive: usize,
    pub easy_negative: usize,
}

impl TagCounts {
    pub fn positives(&self) -> usize {
        self.hard_positive + self.easy_positive
    }

    pub fn negatives(&self) -> usize {
        self.hard_negative + self.easy_negative
    }

    pub fn total(&self) -> usize {
        self.positives() + self.negatives()
    }
}

/// One tag per example of a split, for one task and one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessTags {
    pub task: CategoryId,
    pub criterion: Criterion,
    pub params: MiningParams,
    pub tags: BTreeMap<ImageId, Tag>,
}

impl HardnessTags {
    pub fn counts(&self) -> TagCounts {
        let mut counts = TagCounts::default();
        for tag in self.tags.values() {
            match tag {
                Tag::HardPositive => counts.hard_positive += 1,
                Tag::HardNegative => counts.hard_negative += 1,
                Tag::EasyPositive => counts.easy_positive += 1,
                Tag::EasyNegative => counts.easy_negative += 1,
            }
        }
        counts
    }

    pub fn ids_with(&self, tag: Tag) -> Vec<ImageId> {
        self.tags
            .iter()
            .filter(|(_, &t)| t == tag)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn get(&self, id: ImageId) -> Option<Tag> {
        self.tags.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}
