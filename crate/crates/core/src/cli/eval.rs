//! `eval`.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use super::in_file;
use super::train::load_tags;
use super::manifest::{beside, RunManifest};
use crate::dataset::ImageId;
use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_atomic, write_json};
use crate::metrics::{split_report, MetricsReport, Prediction, PredictionSet, Subset, DEFAULT_ECE_BINS};

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Predictions JSONL {"image_id", "score"} covering the challenge set.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Challenge-set JSON (or an id-to-tag map) providing labels and tags.
    #[arg(long)]
    pub challenge_set: PathBuf,
    /// Equal-width ECE bins.
    #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
    pub bins: usize,
    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    image_id: ImageId,
    score: f64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from("subset,count,auc,error,nll,ece\n");
    for subset in Subset::ALL {
        let m = report.get(subset);
        let name = serde_json::to_value(subset)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{}",
            m.count,
            cell(m.auc),
            cell(m.error),
            cell(m.nll),
            cell(m.ece)
        );
    }
    out
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.bins == 0 {
        return Err(Error::Config("--bins must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("eval", a, None)?;
    manifest.input(&a.predictions)?;
    manifest.input(&a.challenge_set)?;
    let tags = load_tags(&a.challenge_set)?;
    let rows: Vec<ScoreRow> = in_file(&a.predictions, read_jsonl(&a.predictions))?;
    let mut entries = Vec::with_capacity(rows.len());
    for r in rows {
        let label = tags.get(&r.image_id).map(|t| t.is_positive()).ok_or_else(|| {
            Error::Coverage(format!("prediction for image {} outside the challenge set", r.image_id))
        })?;
        entries.push((
            r.image_id,
            Prediction {
                score: r.score,
                label,
            },
        ));
    }
    let preds = PredictionSet::new(entries)?;
    let report = split_report(&preds, &tags, a.bins)?;
    write_json(&a.out, &report)?;
    manifest.output(&a.out);
    if let Some(csv) = &a.csv {
        write_atomic(csv, report_csv(&report).as_bytes())?;
        manifest.output(csv);
    }
    manifest.write(&beside(&a.out))?;
    print!("{}", report_csv(&report));
    Ok(())
}
