//! `split`, `mine-ce` and `mine-gist`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use super::manifest::{beside, RunManifest};
use super::{parse_ratios, warn};
use crate::ce::{alpha_context_cues, tag_ce_hardness, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::challenge::{
    assign_environments, export_challenge_set, load_challenge_set, ChallengeSet, CueEntry,
    EnvironmentAssignment,
};
use crate::dataset::{
    load_annotations, load_embeddings, make_split, normalize_name, AnnotationStore, CategoryId,
    CategoryKind, DatasetSplit, ImageId, SplitPart,
};
use crate::error::{Error, Result};
use crate::gist::{calibrate_tau, gist_scores, presence_labels, prototype_embedding, tag_gist_hardness};
use crate::io::{read_json, write_json, write_jsonl};
use crate::tags::Criterion;

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// COCO-format annotation JSON.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.1,0.2")]
    pub ratios: Vec<f64>,
    /// Seed of the shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output split JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let mut manifest = RunManifest::new("split", a, Some(a.seed))?;
    manifest.input(&a.annotations)?;
    let store = load_annotations(&a.annotations)?;
    let split = make_split(&store.image_ids(), ratios, a.seed)?;
    write_json(&a.out, &split)?;
    manifest.output(&a.out);
    manifest.write(&beside(&a.out))?;
    let (tr, va, te) = split.sizes();
    println!("train {tr}  valid {va}  test {te}");
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct MineCeArgs {
    /// COCO-format annotation JSON.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Split JSON written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    /// Task category name; repeatable.
    #[arg(long = "task", required_unless_present = "all_tasks")]
    pub tasks: Vec<String>,
    /// Mine every thing category.
    #[arg(long, conflicts_with = "tasks")]
    pub all_tasks: bool,
    /// Context-score threshold for cues.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Area threshold for hardness.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Split part to tag.
    #[arg(long, default_value_t = SplitPart::Test)]
    pub eval_split: SplitPart,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    task: String,
    task_id: CategoryId,
    hard_positives: usize,
    hard_negatives: usize,
    easy_positives: usize,
    easy_negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_cue: Option<String>,
}

impl SummaryRow {
    fn of(set: &ChallengeSet, store: &AnnotationStore) -> Self {
        SummaryRow {
            task: set.task.clone(),
            task_id: set.task_id,
            hard_positives: set.hard_positives.len(),
            hard_negatives: set.hard_negatives.len(),
            easy_positives: set.easy_positives.len(),
            easy_negatives: set.easy_negatives.len(),
            top_cue: set
                .top_cue
                .and_then(|c| store.categories().name(c))
                .map(normalize_name),
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    tasks: Vec<SummaryRow>,
    skipped: Vec<Skipped>,
}

#[derive(Debug, Serialize)]
struct Skipped {
    task: String,
    reason: String,
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<24} {:>6} {:>6} {:>6} {:>6}", "task", "hp", "hn", "ep", "en");
    for r in rows {
        println!(
            "{:<24} {:>6} {:>6} {:>6} {:>6}",
            r.task, r.hard_positives, r.hard_negatives, r.easy_positives, r.easy_negatives
        );
    }
}

fn load_split(path: &Path, manifest: &mut RunManifest) -> Result<DatasetSplit> {
    manifest.input(path)?;
    read_json(path)
}

/// Resolves task names to ids, or all thing categories.
fn resolve_tasks(store: &AnnotationStore, names: &[String], all: bool) -> Result<Vec<(String, CategoryId)>> {
    if all {
        return Ok(store
            .categories()
            .iter()
            .filter(|c| c.kind == CategoryKind::Thing)
            .map(|c| (normalize_name(&c.name), c.id))
            .collect());
    }
    names
        .iter()
        .map(|n| {
            let id = store
                .categories()
                .by_name(n)
                .ok_or_else(|| Error::Lookup(format!("unknown task category {n:?}")))?;
            Ok((normalize_name(n), id))
        })
        .collect()
}

fn mine_ce_task(
    store: &AnnotationStore,
    split: &DatasetSplit,
    a: &MineCeArgs,
    name: &str,
    target: CategoryId,
) -> Result<ChallengeSet> {
    let cue_set = alpha_context_cues(store, &split.train, target, a.alpha)?;
    let eval_ids = split.part(a.eval_split);
    let tags = tag_ce_hardness(store, eval_ids, target, &cue_set, a.beta)?;
    let envs = if cue_set.is_empty() {
        None
    } else {
        Some(assign_environments(store, eval_ids, target, &cue_set)?)
    };
    let cues = cue_set
        .cues
        .iter()
        .map(|&(id, score)| CueEntry {
            id,
            name: normalize_name(store.categories().name(id).unwrap_or_default()),
            score,
        })
        .collect();
    Ok(ChallengeSet::new(name, a.eval_split, &tags, envs.as_ref())?.with_cues(cues))
}

pub fn mine_ce(a: &MineCeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("mine-ce", a, None)?;
    manifest.input(&a.annotations)?;
    let store = load_annotations(&a.annotations)?;
    let split = load_split(&a.split, &mut manifest)?;
    let tasks = resolve_tasks(&store, &a.tasks, a.all_tasks)?;

    let results: Vec<Result<ChallengeSet>> = tasks
        .par_iter()
        .map(|(name, id)| mine_ce_task(&store, &split, a, name, *id))
        .collect();

    let mut summary = Summary {
        tasks: Vec::new(),
        skipped: Vec::new(),
    };
    for ((name, _), result) in tasks.iter().zip(results) {
        let set = match result {
            Ok(set) => set,
            // only the bulk mode tolerates tasks without training positives
            Err(Error::Undefined(reason)) if a.all_tasks => {
                warn(format!("skipping {name}: {reason}"));
                summary.skipped.push(Skipped {
                    task: name.clone(),
                    reason,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        if set.cues.is_empty() {
            warn(format!("{name} has no context cue above alpha {}; hard sets are empty", a.alpha));
        }
        let path = a.out.join(format!("{name}.ce.json"));
        export_challenge_set(&set, &path)?;
        manifest.output(&path);
        summary.tasks.push(SummaryRow::of(&set, &store));
    }
    let summary_path = a.out.join("summary.json");
    write_json(&summary_path, &summary)?;
    manifest.output(&summary_path);
    manifest.write(&a.out.join("manifest.json"))?;
    print_summary(&summary.tasks);
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct MineGistArgs {
    /// COCO-format annotation JSON, for presence labels.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Split JSON; the prototype is built from its training part.
    #[arg(long)]
    pub split: PathBuf,
    /// Caption embeddings JSONL.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Directory of CE challenge sets whose hard counts the gist sets match.
    #[arg(long)]
    pub ce_dir: PathBuf,
    /// Restrict to these tasks; default is every CE set in `--ce-dir`.
    #[arg(long = "task")]
    pub tasks: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ScoreRow {
    image_id: ImageId,
    similarity: f64,
}

fn ce_set_paths(dir: &Path, only: &[String]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(task) = name.strip_suffix(".ce.json") {
            if only.is_empty() || only.iter().any(|t| normalize_name(t) == task) {
                paths.push(path);
            }
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Lookup(format!("no CE challenge sets in {}", dir.display())));
    }
    Ok(paths)
}

pub fn mine_gist(a: &MineGistArgs) -> Result<()> {
    let mut manifest = RunManifest::new("mine-gist", a, None)?;
    manifest.input(&a.annotations)?;
    manifest.input(&a.embeddings)?;
    let store = load_annotations(&a.annotations)?;
    let split = load_split(&a.split, &mut manifest)?;
    let embeddings = load_embeddings(&a.embeddings)?;
    let paths = ce_set_paths(&a.ce_dir, &a.tasks)?;
    let mut ce_sets = Vec::with_capacity(paths.len());
    for p in &paths {
        manifest.input(p)?;
        let set = load_challenge_set(p)?;
        if set.criterion != Criterion::Ce {
            return Err(Error::Config(format!("{} is not a CE challenge set", p.display())));
        }
        ce_sets.push(set);
    }

    let results: Vec<Result<(ChallengeSet, Vec<ScoreRow>, usize)>> = ce_sets
        .par_iter()
        .map(|ce| {
            let eval_ids: Vec<ImageId> = ce.labels().keys().copied().collect();
            let prototype = prototype_embedding(&store, &embeddings, &split.train, ce.task_id)?;
            let scores = gist_scores(&embeddings, ce.task_id, &eval_ids, &prototype)?;
            let labels = presence_labels(&store, &eval_ids, ce.task_id)?;
            let counts = (ce.hard_positives.len(), ce.hard_negatives.len());
            let tau = calibrate_tau(&scores, &labels, counts)?;
            let tags = tag_gist_hardness(&scores, &labels, tau)?;
            let envs = ce.environment_assignment().map(|e| EnvironmentAssignment {
                envs: e
                    .envs
                    .into_iter()
                    .filter(|(id, _)| tags.tags.contains_key(id))
                    .collect::<BTreeMap<_, _>>(),
                ..e
            });
            let set = ChallengeSet::new(ce.task.clone(), ce.split, &tags, envs.as_ref())?
                .with_cues(ce.cues.clone());
            let rows = scores
                .similarities
                .iter()
                .map(|(&image_id, &similarity)| ScoreRow {
                    image_id,
                    similarity,
                })
                .collect();
            Ok((set, rows, scores.excluded.len()))
        })
        .collect();

    let mut summary = Summary {
        tasks: Vec::new(),
        skipped: Vec::new(),
    };
    for result in results {
        let (set, rows, excluded) = result?;
        if excluded > 0 {
            warn(format!("{}: {excluded} images with zero-norm embeddings left untagged", set.task));
        }
        let path = a.out.join(format!("{}.gist.json", set.task));
        export_challenge_set(&set, &path)?;
        manifest.output(&path);
        let scores_path = a.out.join(format!("{}.gist-scores.jsonl", set.task));
        write_jsonl(&scores_path, &rows)?;
        manifest.output(&scores_path);
        summary.tasks.push(SummaryRow::of(&set, &store));
    }
    let summary_path = a.out.join("summary.json");
    write_json(&summary_path, &summary)?;
    manifest.output(&summary_path);
    manifest.write(&a.out.join("manifest.json"))?;
    print_summary(&summary.tasks);
    Ok(())
}
