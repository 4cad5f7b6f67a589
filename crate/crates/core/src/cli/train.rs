//! `train`, `sweep`, `predict` and `synth`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use super::manifest::{beside, RunManifest};
use super::{in_file, parse_ratios};
use crate::challenge::ChallengeSet;
use crate::dataset::{make_split, ImageId};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json, write_jsonl};
use crate::tags::Tag;
use crate::trainer::{
    load_examples, sweep_and_select, synth_spurious_dataset, synth_tags, train as fit,
    EpochRecord, LabeledExample, LinearModel, LossKind, SweepGrid, TrainConfig,
    DEFAULT_SWEEP_SEEDS,
};

/// A trained model with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: TrainConfig,
    pub model: LinearModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_valid_nll: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConfigArgs {
    /// TrainConfig JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Learning rate, overriding the config file.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size, overriding the config file.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epoch budget, overriding the config file.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Seed of shuffling and sampling, overriding the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self, manifest: &mut RunManifest) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                manifest.input(p)?;
                read_json(p)?
            }
            None => TrainConfig::default(),
        };
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(e) = self.max_epochs {
            cfg.max_epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

fn load_data(path: &Path, manifest: &mut RunManifest) -> Result<Vec<LabeledExample>> {
    manifest.input(path)?;
    in_file(path, load_examples(path))
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training examples, JSONL {"features", "y", "env"?, "id"?}.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation examples for early stopping.
    #[arg(long)]
    pub valid: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Loss, overriding the config file.
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Hyperparameter of the loss.
    #[arg(long)]
    pub hyper: Option<f64>,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train", a, None)?;
    let mut cfg = a.config.resolve(&mut manifest)?;
    if let Some(kind) = a.loss {
        cfg.loss_kind = kind;
    }
    if a.hyper.is_some() {
        cfg.hyper = a.hyper;
    }
    manifest.seed = Some(cfg.seed);
    manifest.resolve(&cfg)?;
    let train_data = load_data(&a.data, &mut manifest)?;
    let valid = load_data(&a.valid, &mut manifest)?;
    let out = fit(&cfg, &train_data, &valid)?;
    println!(
        "{}: best epoch {} of {}, valid NLL {:.5}",
        cfg.loss_kind,
        out.best_epoch,
        out.history.len() - 1,
        out.best_valid_nll
    );
    let file = ModelFile {
        config: cfg,
        model: out.model,
        best_epoch: Some(out.best_epoch),
        best_valid_nll: Some(out.best_valid_nll),
        history: out.history,
    };
    write_json(&a.out, &file)?;
    manifest.output(&a.out);
    manifest.write(&beside(&a.out))
}

/// Reads per-example tags from a challenge-set file or a plain
/// `{"<id>": "<tag>"}` map.
pub fn load_tags(path: &Path) -> Result<BTreeMap<ImageId, Tag>> {
    let value: serde_json::Value = read_json(path)?;
    let parse_err = |e: serde_json::Error| Error::Parse {
        record: path.display().to_string(),
        message: e.to_string(),
    };
    if value.get("hard_positives").is_some() {
        let set: ChallengeSet = serde_json::from_value(value).map_err(parse_err)?;
        Ok(set.tags()?.tags)
    } else {
        serde_json::from_value(value).map_err(parse_err)
    }
}

/// Tags of `data` in row order; every row needs an id with a tag.
fn tags_for(data: &[LabeledExample], tags: &BTreeMap<ImageId, Tag>) -> Result<Vec<Tag>> {
    data.iter()
        .enumerate()
        .map(|(i, e)| {
            let id = e.id.ok_or_else(|| Error::Format {
                line: i + 1,
                message: "validation rows need an \"id\" to join tags".into(),
            })?;
            let tag = *tags
                .get(&id)
                .ok_or_else(|| Error::Coverage(format!("no tag for validation image {id}")))?;
            if tag.is_positive() != e.y {
                return Err(Error::Coverage(format!(
                    "label of validation image {id} disagrees with its tag"
                )));
            }
            Ok(tag)
        })
        .collect()
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Training examples JSONL.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation examples JSONL, used for early stopping and selection.
    #[arg(long)]
    pub valid: PathBuf,
    /// Tags of the validation examples (challenge set or id-to-tag map).
    #[arg(long)]
    pub tags: PathBuf,
    /// Loss whose grid is swept.
    #[arg(long)]
    pub loss: LossKind,
    /// Grid JSON {"<loss>": [values]}; losses not listed use the defaults.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Seeds per grid value.
    #[arg(long, default_value_t = DEFAULT_SWEEP_SEEDS)]
    pub seeds: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sweep", a, None)?;
    let base = a.config.resolve(&mut manifest)?;
    manifest.seed = Some(base.seed);
    let grid = match &a.grid {
        Some(p) => {
            manifest.input(p)?;
            let mut grid = SweepGrid::default();
            let given: SweepGrid = read_json(p)?;
            grid.values.extend(given.values);
            grid
        }
        None => SweepGrid::default(),
    };
    manifest.resolve(&serde_json::json!({
        "base": &base,
        "grid": grid.configs(a.loss),
        "seeds": a.seeds,
    }))?;
    let train_data = load_data(&a.data, &mut manifest)?;
    let valid = load_data(&a.valid, &mut manifest)?;
    manifest.input(&a.tags)?;
    let tags = tags_for(&valid, &load_tags(&a.tags)?)?;

    let outcome = sweep_and_select(&base, a.loss, &grid, a.seeds, &train_data, &valid, &tags)?;
    let report_path = a.out.join("report.json");
    write_json(&report_path, &outcome.report)?;
    manifest.output(&report_path);

    let best = outcome.best_index();
    let chosen = &outcome.report.configs[best];
    for (run, model) in chosen.runs.iter().zip(outcome.best_models()) {
        let path = a.out.join(format!("best-seed{}.json", run.seed));
        let mut config = outcome.report.best.clone();
        config.seed = run.seed;
        let file = ModelFile {
            config,
            model: model.clone(),
            best_epoch: Some(run.best_epoch),
            best_valid_nll: None,
            history: Vec::new(),
        };
        write_json(&path, &file)?;
        manifest.output(&path);
    }
    manifest.write(&a.out.join("manifest.json"))?;

    println!("{:>10} {:>9} {:>9} {:>9}", "hyper", "hp_nll", "hn_nll", "maxloss");
    for c in &outcome.report.configs {
        let h = c.hyper.map_or_else(|| "-".to_string(), |h| h.to_string());
        let mark = if c.selected { " *" } else { "" };
        println!("{h:>10} {:>9.4} {:>9.4} {:>9.4}{mark}", c.hp_nll, c.hn_nll, c.maxloss);
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Model JSON written by `train` or `sweep`.
    #[arg(long)]
    pub model: PathBuf,
    /// Examples to score; every row needs an "id".
    #[arg(long)]
    pub data: PathBuf,
    /// Output JSONL {"image_id", "score"}.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ScoredRow {
    image_id: ImageId,
    score: f64,
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let mut manifest = RunManifest::new("predict", a, None)?;
    manifest.input(&a.model)?;
    let file: ModelFile = read_json(&a.model)?;
    let data = load_data(&a.data, &mut manifest)?;
    if data[0].features.len() != file.model.dim() {
        return Err(Error::Config(format!(
            "model has {} features, data has {}",
            file.model.dim(),
            data[0].features.len()
        )));
    }
    let mut seen = BTreeSet::new();
    let mut rows = Vec::with_capacity(data.len());
    for (i, e) in data.iter().enumerate() {
        let id = e.id.ok_or_else(|| Error::Format {
            line: i + 1,
            message: format!("{}: row has no \"id\"", a.data.display()),
        })?;
        if !seen.insert(id) {
            return Err(Error::Format {
                line: i + 1,
                message: format!("{}: duplicate id {id}", a.data.display()),
            });
        }
        rows.push(ScoredRow {
            image_id: id,
            score: file.model.predict(&e.features),
        });
    }
    write_jsonl(&a.out, &rows)?;
    manifest.output(&a.out);
    manifest.write(&beside(&a.out))?;
    println!("scored {} examples", rows.len());
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Seed of the generator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total number of examples before splitting.
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    /// Label signal of the core feature.
    #[arg(long, default_value_t = 1.0)]
    pub core: f64,
    /// Label signal of the spurious feature where it agrees with the label.
    #[arg(long, default_value_t = 2.0)]
    pub spurious: f64,
    /// Fraction of examples whose spurious feature disagrees with the label.
    #[arg(long, default_value_t = 0.05)]
    pub minority: f64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.1,0.2")]
    pub ratios: Vec<f64>,
    /// Output directory for train/valid/test JSONL and tag maps.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let mut manifest = RunManifest::new("synth", a, Some(a.seed))?;
    let data = synth_spurious_dataset(a.seed, a.n, a.core, a.spurious, a.minority)?;
    let ids: Vec<ImageId> = data.iter().filter_map(|e| e.id).collect();
    let split = make_split(&ids, ratios, a.seed)?;
    let by_id: BTreeMap<ImageId, &LabeledExample> =
        data.iter().filter_map(|e| Some((e.id?, e))).collect();
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        let rows: Vec<LabeledExample> = part.iter().map(|id| by_id[id].clone()).collect();
        let path = a.out.join(format!("{name}.jsonl"));
        write_jsonl(&path, &rows)?;
        manifest.output(&path);
        if name != "train" {
            let tags: BTreeMap<ImageId, Tag> = part.iter().copied().zip(synth_tags(&rows)).collect();
            let tag_path = a.out.join(format!("{name}.tags.json"));
            write_json(&tag_path, &tags)?;
            manifest.output(&tag_path);
        }
    }
    manifest.write(&a.out.join("manifest.json"))?;
    let (tr, va, te) = split.sizes();
    println!("train {tr}  valid {va}  test {te}");
    Ok(())
}
