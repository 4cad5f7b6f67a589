//! Training objectives with analytic parameter gradients.
//!
//! Every loss takes a mini-batch of references into the training set and
//! returns its value together with the gradient over the flat parameter
//! vector of [`LinearModel`]. All objectives add `l2 * ||weights||^2`; the
//! bias is not regularized. Probabilities are clamped to
//! `[PROB_EPS, 1 - PROB_EPS]` before any logarithm, and a clamped example
//! contributes a zero derivative.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::data::{env_of, LabeledExample, NUM_ENVS};
use super::model::{sigmoid, LinearModel};
use super::rng::epoch_rng;
use crate::error::{Error, Result};
use crate::metrics::PROB_EPS;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Evaluated {
    fn zeros(model: &LinearModel) -> Self {
        Evaluated {
            value: 0.0,
            grad: vec![0.0; model.num_params()],
        }
    }

    fn add_scaled(&mut self, other: &Evaluated, scale: f64) {
        self.value += scale * other.value;
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            *g += scale * o;
        }
    }

    fn with_l2(mut self, model: &LinearModel, l2: f64) -> Self {
        if l2 != 0.0 {
            self.value += l2 * model.weight_norm_sq();
            for (g, w) in self.grad.iter_mut().zip(&model.weights) {
                *g += 2.0 * l2 * w;
            }
        }
        self
    }
}

/// Per-example cross-entropy at logit `z` and its derivative in `z`.
#[derive(Debug, Clone, Copy)]
struct Pointwise {
    loss: f64,
    /// d loss / dz; zero when the probability was clamped.
    dz: f64,
    /// logit and raw sigmoid, kept for the second-order IRM term
    z: f64,
    sig: f64,
    clamped: bool,
}

fn pointwise(model: &LinearModel, ex: &LabeledExample) -> Pointwise {
    let z = model.logit(&ex.features);
    let sig = sigmoid(z);
    let clamped = !(PROB_EPS..=1.0 - PROB_EPS).contains(&sig);
    let q = sig.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let loss = if ex.y { -q.ln() } else { -(1.0 - q).ln() };
    let dz = if clamped {
        0.0
    } else {
        sig - f64::from(u8::from(ex.y))
    };
    Pointwise {
        loss,
        dz,
        z,
        sig,
        clamped,
    }
}

fn add_logit_grad(grad: &mut [f64], ex: &LabeledExample, coeff: f64) {
    let d = ex.features.len();
    for (g, x) in grad[..d].iter_mut().zip(&ex.features) {
        *g += coeff * x;
    }
    grad[d] += coeff;
}

fn nonempty(batch: &[&LabeledExample]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::Config("empty batch".into()))
    } else {
        Ok(())
    }
}

/// Mean cross-entropy without regularization.
fn mean_xent(model: &LinearModel, batch: &[&LabeledExample]) -> Evaluated {
    let mut out = Evaluated::zeros(model);
    let n = batch.len() as f64;
    for ex in batch {
        let p = pointwise(model, ex);
        out.value += p.loss;
        add_logit_grad(&mut out.grad, ex, p.dz / n);
    }
    out.value /= n;
    out
}

pub fn loss_erm(model: &LinearModel, batch: &[&LabeledExample], l2: f64) -> Result<Evaluated> {
    nonempty(batch)?;
    Ok(mean_xent(model, batch).with_l2(model, l2))
}

/// `(1/n) sum_i (1/w_i)^alpha * xent_i`, with `weights[i]` the probability
/// mass of example `i`'s label or environment.
pub fn loss_reweight(
    model: &LinearModel,
    batch: &[&LabeledExample],
    weights: &[f64],
    alpha: f64,
    l2: f64,
) -> Result<Evaluated> {
    nonempty(batch)?;
    if weights.len() != batch.len() {
        return Err(Error::Config("one weight per example required".into()));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w > 0.0 && w <= 1.0)) {
        return Err(Error::Config(format!("reweighting mass {w} outside (0, 1]")));
    }
    let mut out = Evaluated::zeros(model);
    let n = batch.len() as f64;
    for (ex, &w) in batch.iter().zip(weights) {
        let scale = (1.0 / w).powf(alpha);
        let p = pointwise(model, ex);
        out.value += scale * p.loss;
        add_logit_grad(&mut out.grad, ex, scale * p.dz / n);
    }
    out.value /= n;
    Ok(out.with_l2(model, l2))
}

/// `n` i.i.d. indices with `P(i)` proportional to `(1/w_i)^alpha`, where `n`
/// is the number of weights. Reproducible from `(seed, epoch)`.
pub fn draw_undersample_indices(
    weights: &[f64],
    alpha: f64,
    seed: u64,
    epoch: u64,
) -> Result<Vec<usize>> {
    if let Some(w) = weights.iter().find(|&&w| !(w > 0.0 && w <= 1.0)) {
        return Err(Error::Config(format!("sampling mass {w} outside (0, 1]")));
    }
    if weights.is_empty() {
        return Ok(Vec::new());
    }
    let probs: Vec<f64> = weights.iter().map(|w| (1.0 / w).powf(alpha)).collect();
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = epoch_rng(seed, epoch);
    Ok((0..weights.len()).map(|_| dist.sample(&mut rng)).collect())
}

/// Worst group loss plus the `K / sqrt(n_c)` adjustment, over the groups
/// present in the batch. `group_sizes` are full training-set counts. The
/// gradient follows the maximizing group; ties go to the lowest environment.
pub fn loss_gdro(
    model: &LinearModel,
    batch: &[&LabeledExample],
    k: f64,
    group_sizes: &[usize; NUM_ENVS],
    l2: f64,
) -> Result<Evaluated> {
    nonempty(batch)?;
    let groups = group_by_env(batch)?;
    let mut best: Option<Evaluated> = None;
    for (env, members) in groups.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let n_c = group_sizes[env];
        if n_c == 0 {
            return Err(Error::Config(format!(
                "environment {env} appears in a batch but has no training examples"
            )));
        }
        let mut group = mean_xent(model, members);
        group.value += k / (n_c as f64).sqrt();
        if best.as_ref().is_none_or(|b| group.value > b.value) {
            best = Some(group);
        }
    }
    let best = best.ok_or_else(|| Error::Config("no group present in batch".into()))?;
    Ok(best.with_l2(model, l2))
}

fn group_by_env<'a>(batch: &[&'a LabeledExample]) -> Result<[Vec<&'a LabeledExample>; NUM_ENVS]> {
    let mut groups: [Vec<&LabeledExample>; NUM_ENVS] = Default::default();
    for &ex in batch {
        groups[usize::from(env_of(ex)?)].push(ex);
    }
    Ok(groups)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyNorm {
    /// `g^2`; smooth at zero.
    #[default]
    Squared,
    /// `|g|`
    Absolute,
}

/// Gradient of an environment's loss with respect to a scalar multiplier on
/// the logit, taken at 1, turned into a penalty by `norm`.
///
/// With `g = mean_i (sigmoid(z_i) - y_i) * z_i`, the squared penalty's
/// parameter gradient is `2 g * mean_i (sigmoid'(z_i) z_i + sigmoid(z_i) - y_i) dz_i`.
pub fn irm_penalty(
    model: &LinearModel,
    env_batch: &[&LabeledExample],
    norm: PenaltyNorm,
) -> Result<Evaluated> {
    nonempty(env_batch)?;
    let n = env_batch.len() as f64;
    let mut g = 0.0;
    let mut dg = vec![0.0; model.num_params()];
    for ex in env_batch {
        let p = pointwise(model, ex);
        if p.clamped {
            continue;
        }
        g += p.dz * p.z;
        let slope = p.sig * (1.0 - p.sig) * p.z + p.dz;
        add_logit_grad(&mut dg, ex, slope / n);
    }
    g /= n;
    let (value, scale) = match norm {
        PenaltyNorm::Squared => (g * g, 2.0 * g),
        PenaltyNorm::Absolute => (g.abs(), if g == 0.0 { 0.0 } else { g.signum() }),
    };
    dg.iter_mut().for_each(|d| *d *= scale);
    Ok(Evaluated { value, grad: dg })
}

/// `sum_c [loss_c + lambda * penalty_c]` over the environments in the batch.
pub fn loss_irm(
    model: &LinearModel,
    batch: &[&LabeledExample],
    lambda: f64,
    norm: PenaltyNorm,
    l2: f64,
) -> Result<Evaluated> {
    nonempty(batch)?;
    let mut out = Evaluated::zeros(model);
    for members in group_by_env(batch)?.iter().filter(|m| !m.is_empty()) {
        out.add_scaled(&mean_xent(model, members), 1.0);
        if lambda != 0.0 {
            out.add_scaled(&irm_penalty(model, members, norm)?, lambda);
        }
    }
    Ok(out.with_l2(model, l2))
}

/// Number of worst examples kept by CVaR at level `p`: `ceil(p * n)`, at
/// least one.
pub fn cvar_count(p: f64, n: usize) -> usize {
    // the small offset keeps products such as 0.15 * 20 from rounding up
    let m = (p * n as f64 - 1e-9).ceil();
    (m.max(1.0) as usize).min(n)
}

/// Mean loss of the `ceil(p * n)` highest-loss examples of the batch.
pub fn loss_cvar(model: &LinearModel, batch: &[&LabeledExample], p: f64, l2: f64) -> Result<Evaluated> {
    nonempty(batch)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("CVaR level {p} outside (0, 1]")));
    }
    let points: Vec<Pointwise> = batch.iter().map(|ex| pointwise(model, ex)).collect();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| points[b].loss.total_cmp(&points[a].loss).then(a.cmp(&b)));
    let m = cvar_count(p, batch.len());
    let mut selected = order[..m].to_vec();
    // accumulate in batch order so p = 1 reproduces the ERM sum exactly
    selected.sort_unstable();
    let mut out = Evaluated::zeros(model);
    let mf = m as f64;
    for &i in &selected {
        out.value += points[i].loss;
        add_logit_grad(&mut out.grad, batch[i], points[i].dz / mf);
    }
    out.value /= mf;
    Ok(out.with_l2(model, l2))
}

/// `(1/n) sum_i -(1 - q_i)^gamma log q_i`, with `q_i` the probability given
/// to the true label.
pub fn loss_focal(
    model: &LinearModel,
    batch: &[&LabeledExample],
    gamma: f64,
    l2: f64,
) -> Result<Evaluated> {
    nonempty(batch)?;
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Config(format!("focal gamma {gamma} must be >= 0")));
    }
    let mut out = Evaluated::zeros(model);
    let n = batch.len() as f64;
    for ex in batch {
        let p = pointwise(model, ex);
        let prob = p.sig.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let (q, sign) = if ex.y { (prob, 1.0) } else { (1.0 - prob, -1.0) };
        let modulation = (1.0 - q).powf(gamma);
        out.value += modulation * p.loss;
        if !p.clamped {
            // d/dz of -(1-q)^g ln q, with dq/dz = sign * q (1 - q)
            let dz = sign * (gamma * q * modulation * q.ln() - modulation * (1.0 - q));
            add_logit_grad(&mut out.grad, ex, dz / n);
        }
    }
    out.value /= n;
    Ok(out.with_l2(model, l2))
}
