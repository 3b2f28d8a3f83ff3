//! Random forest of unpruned CART trees grown on Gini impurity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub trees: usize,
    /// Features examined per node; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub min_leaf: usize,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            trees: 100,
            max_features: None,
            bootstrap: true,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf { vote: u8 },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Best threshold on one feature, or `None` when no split leaves
/// `min_leaf` samples on both sides.
fn best_split_on(
    xs: &[Vec<f64>],
    ys: &[u8],
    samples: &[usize],
    feature: usize,
    min_leaf: usize,
    scratch: &mut Vec<(f64, u8)>,
) -> Option<Candidate> {
    scratch.clear();
    scratch.extend(samples.iter().map(|&i| (xs[i][feature], ys[i])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len();
    let total_pos = scratch.iter().filter(|s| s.1 == 1).count();
    let mut left_pos = 0;
    let mut best: Option<Candidate> = None;
    for k in 1..n {
        left_pos += usize::from(scratch[k - 1].1 == 1);
        let (a, b) = (scratch[k - 1].0, scratch[k].0);
        if a == b || k < min_leaf || n - k < min_leaf {
            continue;
        }
        let impurity = (k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(total_pos - left_pos, n - k)) / n as f64;
        if best.as_ref().is_none_or(|c| impurity < c.impurity) {
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            best = Some(Candidate {
                feature,
                threshold,
                impurity,
            });
        }
    }
    best
}

impl DecisionTree {
    /// Grows a tree on `samples` (indices into `xs`, repeats allowed).
    pub fn fit<R: Rng>(xs: &[Vec<f64>], ys: &[u8], samples: Vec<usize>, params: &RfParams, rng: &mut R) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let per_node = params
            .max_features
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
            .clamp(1, dim.max(1));
        let min_leaf = params.min_leaf.max(1);
        let mut features: Vec<usize> = (0..dim).collect();
        let mut scratch = Vec::new();

        let mut nodes = vec![Node::Leaf { vote: 1 }];
        let mut stack = vec![(0usize, samples)];
        while let Some((slot, idx)) = stack.pop() {
            let pos = idx.iter().filter(|&&i| ys[i] == 1).count();
            let vote = u8::from(2 * pos >= idx.len());
            if pos == 0 || pos == idx.len() || idx.len() < 2 * min_leaf {
                nodes[slot] = Node::Leaf { vote };
                continue;
            }
            features.shuffle(rng);
            let mut best: Option<Candidate> = None;
            for (tried, &f) in features.iter().enumerate() {
                // Past the subsample, only keep looking until something splits.
                if tried >= per_node && best.is_some() {
                    break;
                }
                if let Some(c) = best_split_on(xs, ys, &idx, f, min_leaf, &mut scratch) {
                    if best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                        best = Some(c);
                    }
                }
            }
            let Some(best) = best else {
                nodes[slot] = Node::Leaf { vote };
                continue;
            };
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| xs[i][best.feature] <= best.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { vote });
            let right = nodes.len();
            nodes.push(Node::Leaf { vote });
            nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
            };
            stack.push((right, right_idx));
            stack.push((left, left_idx));
        }
        DecisionTree { nodes }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { vote } => return vote,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((at, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Split { left, right, .. } = self.nodes[at] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws from its own stream seeded with `seed ^ t`, so the
    /// result does not depend on the thread count.
    pub fn fit(xs: &[Vec<f64>], ys: &[u8], params: &RfParams, seed: u64) -> Self {
        let n = xs.len();
        let trees = (0..params.trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t as u64);
                let samples = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit(xs, ys, samples, params, &mut rng)
            })
            .collect();
        RandomForest { trees }
    }

    /// Fraction of trees voting 1.
    pub fn score(&self, x: &[f64]) -> f64 {
        let votes: usize = self.trees.iter().map(|t| usize::from(t.predict(x))).sum();
        votes as f64 / self.trees.len() as f64
    }

    pub(crate) fn is_finite(&self) -> bool {
        !self.trees.is_empty()
            && self.trees.iter().all(|t| {
                t.nodes.iter().enumerate().all(|(at, n)| match *n {
                    Node::Leaf { vote } => vote <= 1,
                    Node::Split {
                        threshold, left, right, ..
                    } => threshold.is_finite() && left > at && right > at && left.max(right) < t.nodes.len(),
                })
            })
    }
}
