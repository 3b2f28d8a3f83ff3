//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use crate::embedding::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    /// Added to every class variance, as a fraction of the largest feature
    /// variance in the training data.
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams { var_smoothing: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    /// Class priors indexed by label.
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

fn mean_var(rows: &[&Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

impl GaussianNb {
    /// Both classes must be present.
    pub fn fit(xs: &[Vec<f64>], ys: &[u8], params: &NbParams) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let all: Vec<&Vec<f64>> = xs.iter().collect();
        let (_, total_var) = mean_var(&all, dim);
        let max_var = total_var.iter().copied().fold(0.0, f64::max);
        let epsilon = if max_var > 0.0 {
            params.var_smoothing * max_var
        } else {
            params.var_smoothing
        };

        let fit_class = |label: u8| {
            let rows: Vec<&Vec<f64>> = xs.iter().zip(ys).filter(|(_, &y)| y == label).map(|(x, _)| x).collect();
            let (mean, mut var) = mean_var(&rows, dim);
            var.iter_mut().for_each(|v| *v += epsilon);
            (rows.len() as f64 / xs.len() as f64, mean, var)
        };
        let (p0, m0, v0) = fit_class(0);
        let (p1, m1, v1) = fit_class(1);
        GaussianNb {
            priors: [p0, p1],
            means: [m0, m1],
            variances: [v0, v1],
        }
    }

    /// Joint log-likelihood `ln P(c) + Σ ln N(x_j; μ_cj, σ²_cj)`.
    pub fn joint_log_likelihood(&self, x: &[f64], class: usize) -> f64 {
        let mut jll = self.priors[class].ln();
        for ((v, m), var) in x.iter().zip(&self.means[class]).zip(&self.variances[class]) {
            jll -= 0.5 * (2.0 * std::f64::consts::PI * var).ln();
            jll -= 0.5 * (v - m) * (v - m) / var;
        }
        jll
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.joint_log_likelihood(x, 1) - self.joint_log_likelihood(x, 0))
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.priors.iter().all(|p| p.is_finite())
            && self.means.iter().flatten().all(|v| v.is_finite())
            && self.variances.iter().flatten().all(|v| v.is_finite() && *v > 0.0)
    }
}
