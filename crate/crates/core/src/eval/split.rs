use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::Dataset;
use crate::error::{Error, Result};

pub const MIN_SPLIT_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub shuffle: bool,
    pub stratify: bool,
    pub seed: u64,
}

impl SplitSpec {
    /// 70/10/20, shuffled and stratified.
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
            shuffle: true,
            stratify: true,
            seed,
        }
    }

    pub fn with_stratify(mut self, stratify: bool) -> Self {
        self.stratify = stratify;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || ((fracs.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be in [0, 1] and sum to 1, got {fracs:?}"
            )));
        }
        Ok(())
    }

    /// End of the training and validation slices for `n` items.
    fn cuts(&self, n: usize) -> (usize, usize) {
        // The epsilon keeps 0.7 + 0.1 from flooring 8.0 down to 7.
        let cut = |f: f64| ((f * n as f64 + 1e-9).floor() as usize).min(n);
        (cut(self.train_frac), cut(self.train_frac + self.val_frac))
    }
}

/// Disjoint index partitions whose union is `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `0..labels.len()`. Partition sizes are always `⌊0.7N⌋`,
/// `⌊0.8N⌋ − ⌊0.7N⌋` and the rest; the stratified variant fixes how many
/// positives each partition receives so every class ratio is within one
/// sample of the whole set's.
pub fn split_indices(labels: &[u8], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = labels.len();
    if n < MIN_SPLIT_SIZE {
        return Err(Error::TooSmall {
            need: MIN_SPLIT_SIZE,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (a, b) = spec.cuts(n);

    if !spec.stratify {
        let mut order: Vec<usize> = (0..n).collect();
        if spec.shuffle {
            order.shuffle(&mut rng);
        }
        return Ok(Split {
            train: order[..a].to_vec(),
            val: order[a..b].to_vec(),
            test: order[b..].to_vec(),
        });
    }

    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] != 1).collect();
    if spec.shuffle {
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
    }
    // Positives landing in the first `cut` items.
    let pos_before = |cut: usize| ((cut * pos.len()) as f64 / n as f64).round() as usize;
    let (pa, pb) = (pos_before(a), pos_before(b));
    let (na, nb) = (a - pa, b - pb);
    let mut part = |p: &[usize], q: &[usize]| {
        let mut v: Vec<usize> = p.iter().chain(q).copied().collect();
        if spec.shuffle {
            v.shuffle(&mut rng);
        } else {
            v.sort_unstable();
        }
        v
    };
    let train = part(&pos[..pa], &neg[..na]);
    let val = part(&pos[pa..pb], &neg[na..nb]);
    let test = part(&pos[pb..], &neg[nb..]);
    Ok(Split { train, val, test })
}

/// [`split_indices`] applied to a dataset: `(train, val, test)`.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let s = split_indices(data.labels(), spec)?;
    Ok((data.subset(&s.train), data.subset(&s.val), data.subset(&s.test)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldSpec {
    pub k: usize,
    pub seed: u64,
}

impl KFoldSpec {
    pub fn new(k: usize, seed: u64) -> Self {
        KFoldSpec { k, seed }
    }
}

/// Shuffles `0..n` and cuts it into `k` contiguous folds; the first
/// `n mod k` folds hold one extra index.
pub fn kfold(n: usize, spec: &KFoldSpec) -> Result<Vec<Vec<usize>>> {
    if spec.k < 2 {
        return Err(Error::InvalidConfig(format!("k must be at least 2, got {}", spec.k)));
    }
    if spec.k > n {
        return Err(Error::TooSmall { need: spec.k, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (base, extra) = (n / spec.k, n % spec.k);
    let mut folds = Vec::with_capacity(spec.k);
    let mut start = 0;
    for i in 0..spec.k {
        let len = base + usize::from(i < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}
