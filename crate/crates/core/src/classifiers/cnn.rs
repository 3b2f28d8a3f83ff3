//! 1D convolutional network over encoded token sequences:
//! valid convolution → ReLU → global max pool → dense → sigmoid.

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{sigmoid, softplus, EncodedSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    pub filters: usize,
    pub kernel: usize,
    pub batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for CnnParams {
    fn default() -> Self {
        CnnParams {
            filters: 64,
            kernel: 5,
            batch: 32,
            epochs: 10,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1dNet {
    pub steps: usize,
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
    /// `[filter][offset][channel]`, row-major.
    pub conv_weights: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub dense_weights: Vec<f64>,
    pub dense_bias: f64,
    /// Mean training loss per epoch.
    #[serde(default)]
    pub epoch_losses: Vec<f64>,
}

struct Forward {
    logit: f64,
    pooled: Vec<f64>,
    /// Winning position per filter, `None` when its pooled activation is 0.
    argmax: Vec<Option<usize>>,
}

impl Conv1dNet {
    /// He-uniform convolution weights, Glorot-uniform dense weights, zero biases.
    pub fn init(steps: usize, channels: usize, filters: usize, kernel: usize, seed: u64) -> Result<Self> {
        if kernel == 0 || filters == 0 || channels == 0 {
            return Err(Error::InvalidConfig("cnn filters, kernel and channels must be positive".into()));
        }
        if steps < kernel {
            return Err(Error::TooSmall { need: kernel, got: steps });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = (kernel * channels) as f64;
        let conv = Uniform::new_inclusive(-(6.0 / fan_in).sqrt(), (6.0 / fan_in).sqrt()).expect("finite bounds");
        let dense_limit = (6.0 / (filters as f64 + 1.0)).sqrt();
        let dense = Uniform::new_inclusive(-dense_limit, dense_limit).expect("finite bounds");
        Ok(Conv1dNet {
            steps,
            channels,
            filters,
            kernel,
            conv_weights: (0..filters * kernel * channels).map(|_| conv.sample(&mut rng)).collect(),
            conv_bias: vec![0.0; filters],
            dense_weights: (0..filters).map(|_| dense.sample(&mut rng)).collect(),
            dense_bias: 0.0,
            epoch_losses: Vec::new(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.conv_weights.len() + self.conv_bias.len() + self.dense_weights.len() + 1
    }

    /// Flattened as conv weights, conv biases, dense weights, dense bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.conv_weights);
        p.extend_from_slice(&self.conv_bias);
        p.extend_from_slice(&self.dense_weights);
        p.push(self.dense_bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter vector length");
        let (cw, rest) = p.split_at(self.conv_weights.len());
        let (cb, rest) = rest.split_at(self.filters);
        let (dw, rest) = rest.split_at(self.filters);
        self.conv_weights.copy_from_slice(cw);
        self.conv_bias.copy_from_slice(cb);
        self.dense_weights.copy_from_slice(dw);
        self.dense_bias = rest[0];
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let span = self.kernel * self.channels;
        let positions = self.steps - self.kernel + 1;
        let mut pooled = vec![0.0; self.filters];
        let mut argmax = vec![None; self.filters];
        for f in 0..self.filters {
            let w = &self.conv_weights[f * span..(f + 1) * span];
            for t in 0..positions {
                let window = &x[t * self.channels..t * self.channels + span];
                let z = self.conv_bias[f] + w.iter().zip(window).map(|(a, b)| a * b).sum::<f64>();
                if z > pooled[f] {
                    pooled[f] = z;
                    argmax[f] = Some(t);
                }
            }
        }
        let logit = self.dense_bias + pooled.iter().zip(&self.dense_weights).map(|(a, b)| a * b).sum::<f64>();
        Forward { logit, pooled, argmax }
    }

    /// `x` is a flattened `steps × channels` matrix, one step per row.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.forward(x).logit)
    }

    /// Adds this sample's cross-entropy gradient into `grad`; returns its loss.
    fn accumulate(&self, x: &[f64], y: u8, grad: &mut [f64]) -> f64 {
        let fw = self.forward(x);
        let y = f64::from(y);
        let loss = softplus(fw.logit) - y * fw.logit;
        let r = sigmoid(fw.logit) - y;
        let span = self.kernel * self.channels;
        let cb_at = self.conv_weights.len();
        let dw_at = cb_at + self.filters;
        for f in 0..self.filters {
            grad[dw_at + f] += r * fw.pooled[f];
            if let Some(t) = fw.argmax[f] {
                let dh = r * self.dense_weights[f];
                let window = &x[t * self.channels..t * self.channels + span];
                for (g, v) in grad[f * span..(f + 1) * span].iter_mut().zip(window) {
                    *g += dh * v;
                }
                grad[cb_at + f] += dh;
            }
        }
        grad[dw_at + self.filters] += r;
        loss
    }

    /// Mean binary cross-entropy over the batch and its gradient in
    /// [`Conv1dNet::params`] order.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[u8]) -> (f64, Vec<f64>) {
        let per_sample: Vec<(f64, Vec<f64>)> = xs
            .par_iter()
            .zip(ys.par_iter())
            .map(|(x, &y)| {
                let mut g = vec![0.0; self.param_count()];
                let l = self.accumulate(x, y, &mut g);
                (l, g)
            })
            .collect();
        let n = xs.len().max(1) as f64;
        let mut grad = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        for (l, g) in per_sample {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub(crate) fn is_finite(&self) -> bool {
        let span = self.filters * self.kernel * self.channels;
        self.conv_weights.len() == span
            && self.conv_bias.len() == self.filters
            && self.dense_weights.len() == self.filters
            && self.steps >= self.kernel
            && self.params().iter().all(|v| v.is_finite())
    }
}

/// Mini-batch SGD on binary cross-entropy. Embeddings are inputs, not
/// parameters, so they stay fixed.
pub fn fit(rows: &[EncodedSequence], ys: &[u8], params: &CnnParams, seed: u64) -> Result<Conv1dNet> {
    let first = rows.first().ok_or(Error::TooSmall { need: 2, got: 0 })?;
    if params.batch == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::InvalidConfig("cnn batch and learning_rate must be positive".into()));
    }
    let mut net = Conv1dNet::init(first.maxlen(), first.dim(), params.filters, params.kernel, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(params.batch) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
            let by: Vec<u8> = batch.iter().map(|&i| ys[i]).collect();
            let (loss, grad) = net.loss_and_grad(&xs, &by);
            total += loss * batch.len() as f64;
            let mut p = net.params();
            for (v, g) in p.iter_mut().zip(&grad) {
                *v -= params.learning_rate * g;
            }
            net.set_params(&p);
        }
        net.epoch_losses.push(total / rows.len() as f64);
    }
    Ok(net)
}
