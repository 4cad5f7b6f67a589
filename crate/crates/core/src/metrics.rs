//! AUC, error, NLL and ECE, with a hard/easy breakdown.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ImageId;
use crate::error::{Error, Result};
use crate::tags::Tag;

pub const PROB_EPS: f64 = 1e-12;
pub const DEFAULT_ECE_BINS: usize = 15;

/// Binary cross-entropy of probability `q` for label `y`, with `q` clamped
/// to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn xent(q: f64, y: bool) -> f64 {
    let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y {
        -q.ln()
    } else {
        -(1.0 - q).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: bool,
}

/// Scores and labels keyed by example id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    entries: BTreeMap<ImageId, Prediction>,
}

impl PredictionSet {
    pub fn new(entries: impl IntoIterator<Item = (ImageId, Prediction)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, p) in entries {
            if !(p.score.is_finite() && (0.0..=1.0).contains(&p.score)) {
                return Err(Error::Config(format!(
                    "score {} for image {id} is outside [0, 1]",
                    p.score
                )));
            }
            if map.insert(id, p).is_some() {
                return Err(Error::Config(format!("duplicate prediction for image {id}")));
            }
        }
        Ok(PredictionSet { entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageId, &Prediction)> {
        self.entries.iter()
    }

    pub fn values(&self) -> Vec<Prediction> {
        self.entries.values().copied().collect()
    }
}

/// Mann-Whitney AUC via average ranks; ties count one half.
pub fn auc(preds: &[Prediction]) -> Result<f64> {
    let n_pos = preds.iter().filter(|p| p.label).count();
    let n_neg = preds.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined(format!(
            "AUC needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    let mut order: Vec<&Prediction> = preds.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));

    // rank sums are kept doubled so that tie averages stay integral
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].score == order[i].score {
            j += 1;
        }
        // average of 1-based ranks i+1..=j+1, doubled
        let avg2 = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|p| p.label).count() as u128;
        pos_rank_sum2 += avg2 * pos_in_group;
        i = j + 1;
    }
    let n_pos = n_pos as u128;
    let u2 = pos_rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

/// Fraction misclassified when predicting 1 iff `score > threshold`.
pub fn error_rate(preds: &[Prediction], threshold: f64) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Undefined("error rate of an empty set".into()));
    }
    let wrong = preds
        .iter()
        .filter(|p| (p.score > threshold) != p.label)
        .count();
    Ok(wrong as f64 / preds.len() as f64)
}

pub fn mean_nll(preds: &[Prediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Undefined("NLL of an empty set".into()));
    }
    Ok(preds.iter().map(|p| xent(p.score, p.label)).sum::<f64>() / preds.len() as f64)
}

/// Index of the equal-width bin holding `score`: bin `k` covers
/// `(k/B, (k+1)/B]`, except bin 0 which also contains 0.
pub fn ece_bin(score: f64, n_bins: usize) -> usize {
    let b = n_bins as f64;
    let mut k = ((score * b).ceil() as isize - 1).clamp(0, n_bins as isize - 1) as usize;
    // settle rounding at the edges against the exact edge values
    while k > 0 && score <= k as f64 / b {
        k -= 1;
    }
    while k + 1 < n_bins && score > (k + 1) as f64 / b {
        k += 1;
    }
    k
}

pub fn ece(preds: &[Prediction], n_bins: usize) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Undefined("ECE of an empty set".into()));
    }
    if n_bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut score_sum = vec![0.0; n_bins];
    let mut label_sum = vec![0.0; n_bins];
    for p in preds {
        let k = ece_bin(p.score, n_bins);
        count[k] += 1;
        score_sum[k] += p.score;
        label_sum[k] += f64::from(u8::from(p.label));
    }
    let n = preds.len() as f64;
    Ok((0..n_bins)
        .filter(|&k| count[k] > 0)
        .map(|k| {
            let c = count[k] as f64;
            (c / n) * (score_sum[k] / c - label_sum[k] / c).abs()
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    HardPos,
    HardNeg,
    Hard,
    Easy,
    All,
}

impl Subset {
    pub const ALL: [Subset; 5] = [
        Subset::HardPos,
        Subset::HardNeg,
        Subset::Hard,
        Subset::Easy,
        Subset::All,
    ];

    fn contains(self, tag: Tag) -> bool {
        match self {
            Subset::HardPos => tag == Tag::HardPositive,
            Subset::HardNeg => tag == Tag::HardNegative,
            Subset::Hard => tag.is_hard(),
            Subset::Easy => !tag.is_hard(),
            Subset::All => true,
        }
    }
}

/// Metrics of one subset; `None` where the metric is undefined (empty subset,
/// or a single class for AUC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub count: usize,
    pub auc: Option<f64>,
    pub error: Option<f64>,
    pub nll: Option<f64>,
    pub ece: Option<f64>,
}

pub fn subset_metrics(preds: &[Prediction], n_bins: usize) -> Result<SubsetMetrics> {
    if preds.is_empty() {
        return Ok(SubsetMetrics {
            count: 0,
            auc: None,
            error: None,
            nll: None,
            ece: None,
        });
    }
    Ok(SubsetMetrics {
        count: preds.len(),
        auc: auc(preds).ok(),
        error: Some(error_rate(preds, 0.5)?),
        nll: Some(mean_nll(preds)?),
        ece: Some(ece(preds, n_bins)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_bins: usize,
    pub subsets: BTreeMap<Subset, SubsetMetrics>,
}

impl MetricsReport {
    pub fn get(&self, subset: Subset) -> &SubsetMetrics {
        &self.subsets[&subset]
    }
}

/// Evaluates every subset. Predictions and tags must cover the same ids, and
/// predicted labels must agree with the tag's label.
pub fn split_report(
    preds: &PredictionSet,
    tags: &BTreeMap<ImageId, Tag>,
    n_bins: usize,
) -> Result<MetricsReport> {
    if let Some(id) = tags.keys().find(|id| !preds.entries.contains_key(id)) {
        return Err(Error::Coverage(format!("no prediction for tagged image {id}")));
    }
    let mut tagged = Vec::with_capacity(preds.len());
    for (&id, &p) in preds.iter() {
        let tag = *tags
            .get(&id)
            .ok_or_else(|| Error::Coverage(format!("prediction for untagged image {id}")))?;
        if tag.is_positive() != p.label {
            return Err(Error::Coverage(format!(
                "label of image {id} disagrees with its tag"
            )));
        }
        tagged.push((tag, p));
    }
    let mut subsets = BTreeMap::new();
    for subset in Subset::ALL {
        let members: Vec<Prediction> = tagged
            .iter()
            .filter(|(t, _)| subset.contains(*t))
            .map(|&(_, p)| p)
            .collect();
        subsets.insert(subset, subset_metrics(&members, n_bins)?);
    }
    Ok(MetricsReport { n_bins, subsets })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(scores: &[f64], labels: &[u8]) -> Vec<Prediction> {
        scores
            .iter()
            .zip(labels)
            .map(|(&score, &l)| Prediction {
                score,
                label: l == 1,
            })
            .collect()
    }

    #[test]
    fn xent_values() {
        assert!((xent(0.5, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(xent(1.0, true) < 1e-11);
        assert!((xent(0.9, false) - 2.302_585_092_994_045_6).abs() < 1e-12);
        assert!(xent(0.0, true).is_finite());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&preds(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(auc(&preds(&[0.3; 4], &[1, 0, 1, 0])).unwrap(), 0.5);
        assert_eq!(auc(&preds(&[0.9, 0.4, 0.6, 0.1], &[1, 1, 0, 0])).unwrap(), 0.75);
        assert!(matches!(
            auc(&preds(&[0.9, 0.4], &[1, 1])),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn error_threshold_tie_predicts_negative() {
        assert_eq!(error_rate(&preds(&[0.5], &[1]), 0.5).unwrap(), 1.0);
        assert_eq!(error_rate(&preds(&[0.5], &[0]), 0.5).unwrap(), 0.0);
        assert_eq!(error_rate(&preds(&[0.9, 0.1], &[1, 0]), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn nll_cases() {
        assert!((mean_nll(&preds(&[0.5; 3], &[1, 0, 1])).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(mean_nll(&preds(&[1.0, 0.0], &[1, 0])).unwrap() <= 1e-11);
    }

    #[test]
    fn ece_cases() {
        let calibrated = preds(&[0.7; 10], &[1, 1, 1, 1, 1, 1, 1, 0, 0, 0]);
        assert!(ece(&calibrated, 15).unwrap() < 1e-12);
        assert_eq!(ece(&preds(&[1.0; 4], &[0; 4]), 15).unwrap(), 1.0);
        assert!(ece(&[], 15).is_err());
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(ece_bin(0.0, 5), 0);
        assert_eq!(ece_bin(0.2, 5), 0);
        assert_eq!(ece_bin(0.2000001, 5), 1);
        assert_eq!(ece_bin(1.0, 5), 4);
        assert_eq!(ece_bin(0.7, 10), 6);
        assert_eq!(ece_bin(0.3, 10), 2);
    }

    #[test]
    fn report_with_only_easy_examples() {
        let set = PredictionSet::new([
            (ImageId(1), Prediction { score: 0.8, label: true }),
            (ImageId(2), Prediction { score: 0.3, label: false }),
        ])
        .unwrap();
        let tags: BTreeMap<ImageId, Tag> =
            [(ImageId(1), Tag::EasyPositive), (ImageId(2), Tag::EasyNegative)].into();
        let r = split_report(&set, &tags, 15).unwrap();
        assert_eq!(r.get(Subset::Hard).count, 0);
        assert_eq!(r.get(Subset::Hard).auc, None);
        assert_eq!(r.get(Subset::Easy), r.get(Subset::All));

        let mut missing = tags.clone();
        missing.remove(&ImageId(2));
        assert!(matches!(split_report(&set, &missing, 15), Err(Error::Coverage(_))));
    }

    #[test]
    fn scores_outside_unit_interval_rejected() {
        assert!(PredictionSet::new([(ImageId(1), Prediction { score: 1.5, label: true })]).is_err());
    }
}
