//! Task scoring and selection, environment assignment, and challenge-set files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ce::CueSet;
use crate::dataset::{normalize_name, AnnotationStore, CategoryId, ImageId, SplitPart};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::tags::{Criterion, HardnessTags, MiningParams, Tag};

pub const DEFAULT_MIN_HARD: usize = 50;
pub const DEFAULT_TASK_COUNT: usize = 12;
/// Near-duplicates of stronger tasks (cow, backpack, cup, cup).
pub const DEFAULT_EXCLUSIONS: [&str; 4] = ["sheep", "handbag", "bottle", "wine-glass"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: CategoryId,
    pub name: String,
    pub nll_hard: f64,
    pub nll_all: f64,
    pub gap: f64,
    pub n_hp: usize,
    pub n_hn: usize,
}

/// Per-example losses of a reference model on one task, with the CE tags of
/// the same split.
#[derive(Debug, Clone)]
pub struct TaskEvaluation {
    pub name: String,
    pub tags: HardnessTags,
    pub losses: BTreeMap<ImageId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoringOutcome {
    pub scores: Vec<TaskScore>,
    pub skipped: Vec<SkippedTask>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean NLL on hard examples minus mean NLL on all examples, per task.
/// Tasks without hard examples are reported as skipped.
pub fn score_tasks(tasks: &[TaskEvaluation]) -> Result<ScoringOutcome> {
    let mut out = ScoringOutcome::default();
    for task in tasks {
        let mut all = Vec::with_capacity(task.tags.len());
        let mut hard = Vec::new();
        for (id, tag) in &task.tags.tags {
            let loss = *task.losses.get(id).ok_or_else(|| {
                Error::Coverage(format!("task {}: no loss for image {id}", task.name))
            })?;
            all.push(loss);
            if tag.is_hard() {
                hard.push(loss);
            }
        }
        let Some(nll_hard) = mean(hard.iter().copied()) else {
            out.skipped.push(SkippedTask {
                name: task.name.clone(),
                reason: "no hard examples".into(),
            });
            continue;
        };
        let nll_all = mean(all.iter().copied()).unwrap_or(f64::NAN);
        let counts = task.tags.counts();
        out.scores.push(TaskScore {
            task: task.tags.task,
            name: task.name.clone(),
            nll_hard,
            nll_all,
            gap: nll_hard - nll_all,
            n_hp: counts.hard_positive,
            n_hn: counts.hard_negative,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub tasks: Vec<TaskScore>,
    /// Set when fewer than `k` tasks survived the filters.
    pub short: bool,
}

/// Drops tasks below `min_hard` hard positives or hard negatives and tasks
/// named in `exclusions`, then keeps the `k` largest gaps (ties by name).
pub fn select_tasks(
    scores: &[TaskScore],
    min_hard: usize,
    k: usize,
    exclusions: &[String],
) -> Selection {
    let excluded: BTreeSet<String> = exclusions.iter().map(|n| normalize_name(n)).collect();
    let mut survivors: Vec<TaskScore> = scores
        .iter()
        .filter(|s| s.n_hp >= min_hard && s.n_hn >= min_hard)
        .filter(|s| !excluded.contains(&normalize_name(&s.name)))
        .cloned()
        .collect();
    survivors.sort_by(|a, b| b.gap.total_cmp(&a.gap).then_with(|| a.name.cmp(&b.name)));
    let short = survivors.len() < k;
    survivors.truncate(k);
    Selection {
        tasks: survivors,
        short,
    }
}

/// `2 * label + context`, both bits in {0, 1}.
pub fn env_code(label: bool, context: bool) -> u8 {
    2 * u8::from(label) + u8::from(context)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentAssignment {
    pub task: CategoryId,
    pub top_cue: CategoryId,
    pub envs: BTreeMap<ImageId, u8>,
}

impl EnvironmentAssignment {
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for &e in self.envs.values() {
            c[usize::from(e)] += 1;
        }
        c
    }
}

/// Crosses the target label with presence (nonzero area) of the top cue.
pub fn assign_environments(
    store: &AnnotationStore,
    ids: &[ImageId],
    target: CategoryId,
    cue_set: &CueSet,
) -> Result<EnvironmentAssignment> {
    let top_cue = cue_set.top().ok_or_else(|| {
        Error::Undefined(format!(
            "task {target} has no context cue; environments are undefined"
        ))
    })?;
    let mut envs = BTreeMap::new();
    for &id in ids {
        let y = store.is_present(id, target)?;
        let c = store.is_present(id, top_cue)?;
        envs.insert(id, env_code(y, c));
    }
    Ok(EnvironmentAssignment {
        task: target,
        top_cue,
        envs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueEntry {
    pub id: CategoryId,
    pub name: String,
    pub score: f64,
}

/// On-disk challenge set for one task and criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeSet {
    pub task: String,
    pub task_id: CategoryId,
    pub criterion: Criterion,
    pub params: MiningParams,
    pub split: SplitPart,
    pub hard_positives: Vec<ImageId>,
    pub hard_negatives: Vec<ImageId>,
    pub easy_positives: Vec<ImageId>,
    pub easy_negatives: Vec<ImageId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environments: Option<BTreeMap<ImageId, u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_cue: Option<CategoryId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cues: Vec<CueEntry>,
}

impl ChallengeSet {
    pub fn new(
        name: impl Into<String>,
        split: SplitPart,
        tags: &HardnessTags,
        envs: Option<&EnvironmentAssignment>,
    ) -> Result<Self> {
        if let Some(envs) = envs {
            let same = envs.envs.len() == tags.tags.len()
                && envs.envs.keys().zip(tags.tags.keys()).all(|(a, b)| a == b);
            if !same {
                return Err(Error::Coverage(
                    "environments and tags cover different examples".into(),
                ));
            }
        }
        Ok(ChallengeSet {
            task: name.into(),
            task_id: tags.task,
            criterion: tags.criterion,
            params: tags.params,
            split,
            hard_positives: tags.ids_with(Tag::HardPositive),
            hard_negatives: tags.ids_with(Tag::HardNegative),
            easy_positives: tags.ids_with(Tag::EasyPositive),
            easy_negatives: tags.ids_with(Tag::EasyNegative),
            environments: envs.map(|e| e.envs.clone()),
            top_cue: envs.map(|e| e.top_cue),
            cues: Vec::new(),
        })
    }

    pub fn with_cues(mut self, cues: Vec<CueEntry>) -> Self {
        self.cues = cues;
        self
    }

    pub fn tags(&self) -> Result<HardnessTags> {
        let mut tags = BTreeMap::new();
        let lists = [
            (&self.hard_positives, Tag::HardPositive),
            (&self.hard_negatives, Tag::HardNegative),
            (&self.easy_positives, Tag::EasyPositive),
            (&self.easy_negatives, Tag::EasyNegative),
        ];
        for (ids, tag) in lists {
            for &id in ids {
                if tags.insert(id, tag).is_some() {
                    return Err(Error::Integrity(format!(
                        "image {id} appears in more than one list of task {}",
                        self.task
                    )));
                }
            }
        }
        Ok(HardnessTags {
            task: self.task_id,
            criterion: self.criterion,
            params: self.params,
            tags,
        })
    }

    pub fn environment_assignment(&self) -> Option<EnvironmentAssignment> {
        Some(EnvironmentAssignment {
            task: self.task_id,
            top_cue: self.top_cue?,
            envs: self.environments.clone()?,
        })
    }

    pub fn labels(&self) -> BTreeMap<ImageId, bool> {
        let pos = self.hard_positives.iter().chain(&self.easy_positives);
        let neg = self.hard_negatives.iter().chain(&self.easy_negatives);
        pos.map(|&id| (id, true))
            .chain(neg.map(|&id| (id, false)))
            .collect()
    }
}

pub fn export_challenge_set(set: &ChallengeSet, path: &Path) -> Result<()> {
    write_json(path, set)
}

pub fn load_challenge_set(path: &Path) -> Result<ChallengeSet> {
    read_json(path)
}
