//! Binary logistic regression with an L2 penalty on the weights (not the
//! bias), fitted by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::embedding::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub l2: f64,
    /// Stop once the full gradient norm falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Fixed step size. `None` uses `1 / L`, with `L` the trace bound on the
    /// loss curvature, which guarantees monotone descent.
    pub step: Option<f64>,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams {
            l2: 1e-4,
            tolerance: 1e-6,
            max_iter: 10_000,
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Iterations actually run; zero for a fresh model.
    pub iterations: usize,
}

/// Mean log-loss plus `l2/2 · ‖w‖²`, with its gradient `(∂w, ∂b)`.
pub fn loss_and_grad(weights: &[f64], bias: f64, xs: &[Vec<f64>], ys: &[u8], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = bias + x.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        // -[y ln σ(z) + (1-y) ln(1-σ(z))] = softplus(z) - y z
        loss += softplus(z) - f64::from(y) * z;
        let r = sigmoid(z) - f64::from(y);
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, gw, gb)
}

/// The gradient half of [`loss_and_grad`], without evaluating the loss.
fn gradient(weights: &[f64], bias: f64, xs: &[Vec<f64>], ys: &[u8], l2: f64, gw: &mut [f64]) -> f64 {
    let n = xs.len() as f64;
    gw.iter_mut().for_each(|g| *g = 0.0);
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = bias + x.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        let r = sigmoid(z) - f64::from(y);
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    gb / n
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            iterations: 0,
        }
    }

    pub fn fit(xs: &[Vec<f64>], ys: &[u8], params: &LrParams) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let mut model = Self::zeros(dim);
        let step = params.step.unwrap_or_else(|| {
            let mean_sq = xs
                .iter()
                .map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / xs.len().max(1) as f64;
            1.0 / (0.25 * mean_sq + params.l2)
        });
        let mut gw = vec![0.0; dim];
        for it in 0..params.max_iter {
            let gb = gradient(&model.weights, model.bias, xs, ys, params.l2, &mut gw);
            let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
            if norm < params.tolerance {
                break;
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            model.bias -= step * gb;
            model.iterations = it + 1;
        }
        model
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}
