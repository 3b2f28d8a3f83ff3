//! Linear SVM: hinge loss with an L2 penalty, minimized by stochastic
//! subgradient steps (Pegasos), then Platt-scaled into a probability.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    /// Inverse regularization strength; the penalty is `λ = 1 / (C·n)`.
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvcParams {
    fn default() -> Self {
        SvcParams { c: 1.0, epochs: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvc {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Platt slope and intercept: `score = σ(a·f + b)`.
    pub platt_a: f64,
    pub platt_b: f64,
}

impl LinearSvc {
    pub fn fit(xs: &[Vec<f64>], ys: &[u8], params: &SvcParams, seed: u64) -> Self {
        let n = xs.len();
        let dim = xs.first().map_or(0, Vec::len);
        let lambda = 1.0 / (params.c * n as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // The bias rides along as weight `dim` on a constant feature of 1.
        let mut w = vec![0.0; dim + 1];
        let mut avg = vec![0.0; dim + 1];
        let mut averaged = 0usize;
        let average_from = params.epochs / 2;
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0usize;
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let y = if ys[i] == 1 { 1.0 } else { -1.0 };
                let x = &xs[i];
                let margin = y * (w[dim] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += eta * y * xj;
                    }
                    w[dim] += eta * y;
                }
                if epoch >= average_from {
                    averaged += 1;
                    let k = averaged as f64;
                    for (a, v) in avg.iter_mut().zip(&w) {
                        *a += (v - *a) / k;
                    }
                }
            }
        }
        if averaged == 0 {
            avg = w;
        }
        let bias = avg.pop().unwrap_or(0.0);
        let mut model = LinearSvc {
            weights: avg,
            bias,
            platt_a: 1.0,
            platt_b: 0.0,
        };
        let decisions: Vec<f64> = xs.iter().map(|x| model.decision(x)).collect();
        let (a, b) = platt_fit(&decisions, ys);
        model.platt_a = a;
        model.platt_b = b;
        model
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.platt_a * self.decision(x) + self.platt_b)
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.bias.is_finite()
            && self.platt_a.is_finite()
            && self.platt_b.is_finite()
            && self.weights.iter().all(|w| w.is_finite())
    }
}

/// Fits `σ(a·f + b)` to the labels by Newton's method with backtracking,
/// using smoothed targets so separable data still gives a finite slope.
pub fn platt_fit(decisions: &[f64], ys: &[u8]) -> (f64, f64) {
    let pos = ys.iter().filter(|&&y| y == 1).count() as f64;
    let neg = ys.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    let targets: Vec<f64> = ys.iter().map(|&y| if y == 1 { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(f, t)| {
                let z = a * f + b;
                softplus(z) - t * z
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((pos + 1.0) / (neg + 1.0)).ln();
    let mut value = objective(a, b);
    const SIGMA: f64 = 1e-12;
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (f, t) in decisions.iter().zip(&targets) {
            let p = sigmoid(a * f + b);
            let d1 = p - t;
            let d2 = p * (1.0 - p);
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-10 && g2.abs() < 1e-10 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nv = objective(na, nb);
            if nv < value + 1e-4 * step * gd {
                a = na;
                b = nb;
                value = nv;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}
