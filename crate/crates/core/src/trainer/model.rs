use serde::{Deserialize, Serialize};

use crate::metrics::PROB_EPS;

/// Logistic classifier `f(x) = sigmoid(<w, x> + b)`.
///
/// Parameters are addressed as one flat vector: the weights followed by the
/// bias. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// Probability of the positive class, clamped into `[eps, 1 - eps]` so
    /// it stays strictly inside (0, 1) for every finite input.
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x)).clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn from_params(params: &[f64]) -> Self {
        let (bias, weights) = params.split_last().expect("at least the bias parameter");
        LinearModel {
            weights: weights.to_vec(),
            bias: *bias,
        }
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let d = self.weights.len();
        self.weights.copy_from_slice(&params[..d]);
        self.bias = params[d];
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}
