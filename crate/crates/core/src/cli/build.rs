//! `score-tasks` and `select-tasks`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use super::manifest::{beside, RunManifest};
use super::{in_file, warn};
use crate::challenge::{
    load_challenge_set, score_tasks as score, select_tasks as select, TaskEvaluation,
    DEFAULT_EXCLUSIONS, DEFAULT_MIN_HARD, DEFAULT_TASK_COUNT, ScoringOutcome,
};
use crate::dataset::{normalize_name, ImageId};
use crate::error::{Error, Result};
use crate::io::{read_json, read_jsonl, write_json};
use crate::metrics::xent;

#[derive(Debug, Args, Serialize)]
pub struct ScoreTasksArgs {
    /// Directory of CE challenge sets (`*.ce.json`), usually mined on the
    /// validation split.
    #[arg(long)]
    pub ce_dir: PathBuf,
    /// Reference-model predictions, JSONL {"task", "image_id", "score"}.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Output task scores JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
struct TaskPrediction {
    task: String,
    image_id: ImageId,
    score: f64,
}

pub fn score_tasks(a: &ScoreTasksArgs) -> Result<()> {
    let mut manifest = RunManifest::new("score-tasks", a, None)?;
    manifest.input(&a.predictions)?;
    let rows: Vec<TaskPrediction> = in_file(&a.predictions, read_jsonl(&a.predictions))?;
    let mut scores: BTreeMap<String, BTreeMap<ImageId, f64>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if !(r.score.is_finite() && (0.0..=1.0).contains(&r.score)) {
            return Err(Error::Format {
                line: i + 1,
                message: format!("{}: score {} outside [0, 1]", a.predictions.display(), r.score),
            });
        }
        scores
            .entry(normalize_name(&r.task))
            .or_default()
            .insert(r.image_id, r.score);
    }

    let mut paths: Vec<PathBuf> = fs::read_dir(&a.ce_dir)
        .map_err(|e| Error::io(&a.ce_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(".ce.json")))
        .collect();
    paths.sort();
    let mut tasks = Vec::with_capacity(paths.len());
    for p in &paths {
        manifest.input(p)?;
        let set = load_challenge_set(p)?;
        let labels = set.labels();
        let task_scores = scores.get(&set.task).ok_or_else(|| {
            Error::Coverage(format!("no predictions for task {}", set.task))
        })?;
        let mut losses = BTreeMap::new();
        for (id, &y) in &labels {
            let q = task_scores.get(id).ok_or_else(|| {
                Error::Coverage(format!("task {}: no prediction for image {id}", set.task))
            })?;
            losses.insert(*id, xent(*q, y));
        }
        tasks.push(TaskEvaluation {
            name: set.task.clone(),
            tags: set.tags()?,
            losses,
        });
    }
    let outcome = score(&tasks)?;
    for s in &outcome.skipped {
        warn(format!("{} not scored: {}", s.name, s.reason));
    }
    write_json(&a.out, &outcome)?;
    manifest.output(&a.out);
    manifest.write(&beside(&a.out))?;
    println!("{:<24} {:>9} {:>9} {:>9} {:>6} {:>6}", "task", "nll_hard", "nll_all", "gap", "hp", "hn");
    for s in &outcome.scores {
        println!(
            "{:<24} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6}",
            s.name, s.nll_hard, s.nll_all, s.gap, s.n_hp, s.n_hn
        );
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SelectTasksArgs {
    /// Task scores written by `score-tasks`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Minimum hard positives and hard negatives per task.
    #[arg(long, default_value_t = DEFAULT_MIN_HARD)]
    pub min_hard: usize,
    /// Number of tasks to keep.
    #[arg(long, default_value_t = DEFAULT_TASK_COUNT)]
    pub k: usize,
    /// Task names to drop, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EXCLUSIONS.map(String::from))]
    pub exclude: Vec<String>,
    /// Output selection JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn select_tasks(a: &SelectTasksArgs) -> Result<()> {
    let mut manifest = RunManifest::new("select-tasks", a, None)?;
    manifest.input(&a.scores)?;
    let outcome: ScoringOutcome = read_json(&a.scores)?;
    let exclusions: Vec<String> = a.exclude.iter().filter(|s| !s.is_empty()).cloned().collect();
    let selection = select(&outcome.scores, a.min_hard, a.k, &exclusions);
    if selection.tasks.is_empty() {
        warn("no task passed the filters");
    } else if selection.short {
        warn(format!("only {} of {} tasks passed the filters", selection.tasks.len(), a.k));
    }
    write_json(&a.out, &selection)?;
    manifest.output(&a.out);
    manifest.write(&beside(&a.out))?;
    for (rank, s) in selection.tasks.iter().enumerate() {
        println!("{:>3} {:<24} gap {:.4}", rank + 1, s.name, s.gap);
    }
    Ok(())
}
