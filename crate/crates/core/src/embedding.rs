//! Token embeddings for gadget text.
//!
//! Skip-gram with negative sampling over per-record token streams. Each
//! (center, context) pair inside a fixed radius contributes one positive
//! logistic term plus `negatives` noise terms drawn from the unigram
//! distribution raised to the 3/4 power:
//!
//! ```text
//! loss = -ln σ(v_c · u_o) - Σ_k ln σ(-v_c · u_k)
//! ```
//!
//! `v` rows are the exported embeddings; `u` rows are context vectors that
//! are discarded after training. Index 0 is padding and stays zero; index 1
//! collects out-of-vocabulary tokens.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const OOV: usize = 1;
const FIRST_TOKEN: usize = 2;

pub const EMBEDDING_FORMAT_VERSION: u32 = 1;
const EMBEDDING_MAGIC: &str = "specdet-embedding";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_count: u64,
}

impl Vocabulary {
    fn from_sorted(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i + FIRST_TOKEN))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Vocabulary {
            tokens,
            counts,
            index,
            min_count,
        }
    }

    /// Total number of rows, including PAD and OOV.
    pub fn len(&self) -> usize {
        self.tokens.len() + FIRST_TOKEN
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn real_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Index of `token`, or [`OOV`] when it is not in the vocabulary.
    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(FIRST_TOKEN)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    pub fn count(&self, index: usize) -> Option<u64> {
        index
            .checked_sub(FIRST_TOKEN)
            .and_then(|i| self.counts.get(i))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i + FIRST_TOKEN, t.as_str()))
    }
}

/// Counts tokens and assigns indices from 2 upward by descending frequency,
/// breaking ties lexicographically. Tokens seen fewer than `min_count` times
/// are left out (they map to OOV).
pub fn build_vocab(corpus: &CorpusManifest, min_count: u64) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let min_count = min_count.max(1);
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for r in corpus.records() {
        for t in &r.tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_sorted(entries, min_count))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub maxlen: usize,
    /// Context radius on each side of the center token.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial step size; decays linearly towards zero over training.
    pub learning_rate: f64,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 32,
            maxlen: 256,
            window: 5,
            negatives: 5,
            epochs: 15,
            learning_rate: 0.025,
            min_count: 1,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("maxlen", self.maxlen),
            ("window", self.window),
            ("negatives", self.negatives),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vectors: Vec<f64>,
    config: EmbeddingConfig,
    vocab: Vocabulary,
}

impl EmbeddingMatrix {
    /// Seeded starting point: uniform in `[-0.5/dim, 0.5/dim)`, PAD row zero.
    pub fn initialize(vocab: Vocabulary, config: EmbeddingConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let Self { vectors, .. } = Self::init_with(&mut rng, &vocab, &config);
        Ok(EmbeddingMatrix {
            vectors,
            config,
            vocab,
        })
    }

    fn init_with(rng: &mut ChaCha8Rng, vocab: &Vocabulary, config: &EmbeddingConfig) -> Self {
        let dim = config.dim;
        let half = 0.5 / dim as f64;
        let mut vectors = vec![0.0; vocab.len() * dim];
        for v in vectors.iter_mut().skip(dim) {
            *v = rng.random_range(-half..half);
        }
        EmbeddingMatrix {
            vectors,
            config: config.clone(),
            vocab: vocab.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn maxlen(&self) -> usize {
        self.config.maxlen
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn rows(&self) -> usize {
        self.vocab.len()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let d = self.config.dim;
        &self.vectors[index * d..(index + 1) * d]
    }

    pub fn vector(&self, token: &str) -> &[f64] {
        self.row(self.vocab.index_of(token))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{EMBEDDING_MAGIC} format_version={EMBEDDING_FORMAT_VERSION} dim={} maxlen={} V={}",
            c.dim,
            c.maxlen,
            self.rows()
        );
        let _ = writeln!(
            out,
            "config window={} negatives={} epochs={} learning_rate={} min_count={} seed={}",
            c.window, c.negatives, c.epochs, c.learning_rate, c.min_count, c.seed
        );
        for (i, t) in self.vocab.iter() {
            let _ = writeln!(out, "{i}\t{t}\t{}", self.vocab.count(i).unwrap_or(0));
        }
        for r in 0..self.rows() {
            let row: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let corrupt = |line: usize, msg: &str| Error::Corrupt {
            line,
            column: 1,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (_, header) = lines.next().ok_or_else(|| corrupt(1, "missing header"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(EMBEDDING_MAGIC) {
            return Err(corrupt(1, "not an embedding model file"));
        }
        let header: HashMap<&str, &str> = fields.filter_map(|f| f.split_once('=')).collect();
        let version = header.get("format_version").copied().unwrap_or("<missing>");
        if version != EMBEDDING_FORMAT_VERSION.to_string() {
            return Err(Error::VersionMismatch {
                expected: EMBEDDING_FORMAT_VERSION,
                found: version.to_string(),
            });
        }
        let num = |map: &HashMap<&str, &str>, key: &str, line: usize| -> Result<u64> {
            map.get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| corrupt(line, &format!("bad or missing {key}")))
        };
        let dim = num(&header, "dim", 1)? as usize;
        let maxlen = num(&header, "maxlen", 1)? as usize;
        let rows = num(&header, "V", 1)? as usize;
        if rows < FIRST_TOKEN {
            return Err(corrupt(1, "V must include PAD and OOV rows"));
        }

        let (n, cfg_line) = lines.next().ok_or_else(|| corrupt(2, "missing config"))?;
        let mut cfg_fields = cfg_line.split_whitespace();
        if cfg_fields.next() != Some("config") {
            return Err(corrupt(n, "expected config line"));
        }
        let cfg: HashMap<&str, &str> = cfg_fields.filter_map(|f| f.split_once('=')).collect();
        let learning_rate = cfg
            .get("learning_rate")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| corrupt(n, "bad or missing learning_rate"))?;
        let config = EmbeddingConfig {
            dim,
            maxlen,
            window: num(&cfg, "window", n)? as usize,
            negatives: num(&cfg, "negatives", n)? as usize,
            epochs: num(&cfg, "epochs", n)? as usize,
            learning_rate,
            min_count: num(&cfg, "min_count", n)?,
            seed: num(&cfg, "seed", n)?,
        };
        config.validate()?;

        let mut entries = Vec::with_capacity(rows - FIRST_TOKEN);
        for expected in FIRST_TOKEN..rows {
            let (n, line) = lines
                .next()
                .ok_or_else(|| corrupt(0, "truncated vocabulary"))?;
            let mut parts = line.split('\t');
            let (Some(idx), Some(tok), Some(cnt), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(corrupt(n, "malformed vocabulary entry"));
            };
            if idx.parse::<usize>().ok() != Some(expected) || tok.is_empty() {
                return Err(corrupt(n, "vocabulary index out of order"));
            }
            let cnt = cnt
                .parse()
                .map_err(|_| corrupt(n, "malformed vocabulary count"))?;
            entries.push((tok.to_string(), cnt));
        }
        let vocab = Vocabulary::from_sorted(entries, config.min_count);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(corrupt(0, "duplicate vocabulary token"));
        }

        let mut vectors = Vec::with_capacity(rows * dim);
        for _ in 0..rows {
            let (n, line) = lines.next().ok_or_else(|| corrupt(0, "truncated matrix"))?;
            let before = vectors.len();
            for v in line.split_whitespace() {
                let v: f64 = v.parse().map_err(|_| corrupt(n, "malformed value"))?;
                if !v.is_finite() {
                    return Err(corrupt(n, "non-finite value"));
                }
                vectors.push(v);
            }
            if vectors.len() - before != dim {
                return Err(corrupt(n, "row has wrong width"));
            }
        }
        if vectors[..dim].iter().any(|&v| v != 0.0) {
            return Err(corrupt(0, "PAD row must be zero"));
        }
        Ok(EmbeddingMatrix {
            vectors,
            config,
            vocab,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub embedding: EmbeddingMatrix,
    /// Mean per-pair loss of each epoch, in order.
    pub epoch_losses: Vec<f64>,
}

/// Gradients of the negative-sampling loss for one (center, context,
/// negatives) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss and analytic gradients for one training triple.
pub fn sgns_loss_grad(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> (f64, SgnsGradient) {
    let mut grad = SgnsGradient {
        center: vec![0.0; center.len()],
        context: vec![0.0; center.len()],
        negatives: vec![vec![0.0; center.len()]; negatives.len()],
    };
    let loss = sgns_accumulate(center, context, negatives, &mut grad);
    (loss, grad)
}

fn sgns_accumulate(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
    grad: &mut SgnsGradient,
) -> f64 {
    grad.center.iter_mut().for_each(|g| *g = 0.0);
    let pos = dot(center, context);
    // -ln σ(x) = softplus(-x); d/dx = σ(x) - 1
    let mut loss = softplus(-pos);
    let gpos = sigmoid(pos) - 1.0;
    for ((gc, gu), (&c, &u)) in grad
        .center
        .iter_mut()
        .zip(grad.context.iter_mut())
        .zip(center.iter().zip(context))
    {
        *gc += gpos * u;
        *gu = gpos * c;
    }
    for (neg, gn) in negatives.iter().zip(grad.negatives.iter_mut()) {
        let s = dot(center, neg);
        // -ln σ(-x) = softplus(x); d/dx = σ(x)
        loss += softplus(s);
        let gneg = sigmoid(s);
        for ((gc, g), (&c, &n)) in grad
            .center
            .iter_mut()
            .zip(gn.iter_mut())
            .zip(center.iter().zip(neg.iter()))
        {
            *gc += gneg * n;
            *g = gneg * c;
        }
    }
    loss
}

/// Trains skip-gram vectors over `corpus`.
///
/// Single-threaded and fully determined by `config.seed`. With
/// `config.epochs == 0` the result equals [`EmbeddingMatrix::initialize`].
pub fn train_skipgram(
    corpus: &CorpusManifest,
    vocab: &Vocabulary,
    config: &EmbeddingConfig,
) -> Result<TrainedEmbedding> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::NoRealTokens);
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let EmbeddingMatrix { mut vectors, .. } = EmbeddingMatrix::init_with(&mut rng, vocab, config);
    let mut context = vec![0.0; vectors.len()];

    let docs: Vec<Vec<usize>> = corpus
        .records()
        .iter()
        .map(|r| r.tokens.iter().map(|t| vocab.index_of(t)).collect())
        .collect();

    // Noise distribution over OOV and real tokens (never PAD).
    let mut freq = vec![0u64; vocab.len()];
    for &i in docs.iter().flatten() {
        freq[i] += 1;
    }
    let weights: Vec<f64> = freq[OOV..].iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidConfig(format!("noise distribution: {e}")))?;

    let total_steps = (docs.iter().map(Vec::len).sum::<usize>() * config.epochs).max(1);
    let mut step = 0usize;
    let window = config.window as isize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut grad = SgnsGradient {
        center: vec![0.0; dim],
        context: vec![0.0; dim],
        negatives: vec![vec![0.0; dim]; config.negatives],
    };
    let mut neg_idx: Vec<usize> = Vec::with_capacity(config.negatives);

    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for doc in &docs {
            for (t, &center) in doc.iter().enumerate() {
                let progress = step as f64 / total_steps as f64;
                let lr = config.learning_rate * (1.0 - progress).max(1e-4);
                step += 1;
                for off in -window..=window {
                    let pos = t as isize + off;
                    if off == 0 || pos < 0 || pos as usize >= doc.len() {
                        continue;
                    }
                    let ctx = doc[pos as usize];
                    neg_idx.clear();
                    for _ in 0..config.negatives {
                        let n = noise.sample(&mut rng) + OOV;
                        if n != ctx {
                            neg_idx.push(n);
                        }
                    }
                    let row = |m: &Vec<f64>, i: usize| -> Vec<f64> { m[i * dim..(i + 1) * dim].to_vec() };
                    let v_c = row(&vectors, center);
                    let u_o = row(&context, ctx);
                    let u_neg: Vec<Vec<f64>> = neg_idx.iter().map(|&n| row(&context, n)).collect();
                    let neg_refs: Vec<&[f64]> = u_neg.iter().map(Vec::as_slice).collect();
                    grad.negatives.truncate(neg_idx.len());
                    while grad.negatives.len() < neg_idx.len() {
                        grad.negatives.push(vec![0.0; dim]);
                    }
                    loss_sum += sgns_accumulate(&v_c, &u_o, &neg_refs, &mut grad);
                    pairs += 1;

                    if center != PAD {
                        for (v, g) in vectors[center * dim..(center + 1) * dim].iter_mut().zip(&grad.center) {
                            *v -= lr * g;
                        }
                    }
                    for (u, g) in context[ctx * dim..(ctx + 1) * dim].iter_mut().zip(&grad.context) {
                        *u -= lr * g;
                    }
                    for (&n, g) in neg_idx.iter().zip(&grad.negatives) {
                        for (u, gv) in context[n * dim..(n + 1) * dim].iter_mut().zip(g) {
                            *u -= lr * gv;
                        }
                    }
                }
            }
        }
        epoch_losses.push(if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 });
    }

    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "training diverged (non-finite embedding); lower the learning rate".into(),
        ));
    }

    Ok(TrainedEmbedding {
        embedding: EmbeddingMatrix {
            vectors,
            config: config.clone(),
            vocab: vocab.clone(),
        },
        epoch_losses,
    })
}

/// A `maxlen × dim` matrix for one gadget, zero past `true_length`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    maxlen: usize,
    dim: usize,
    data: Vec<f64>,
    true_length: usize,
}

impl EncodedSequence {
    /// Builds a sequence from the first `true_length` rows; the padding is
    /// filled in here.
    pub fn from_rows(maxlen: usize, dim: usize, rows: &[f64]) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 || rows.len() / dim > maxlen {
            return Err(Error::SchemaMismatch {
                expected: format!("at most {maxlen} rows of width {dim}"),
                found: format!("{} values", rows.len()),
            });
        }
        let mut data = vec![0.0; maxlen * dim];
        data[..rows.len()].copy_from_slice(rows);
        Ok(EncodedSequence {
            maxlen,
            dim,
            data,
            true_length: rows.len() / dim,
        })
    }

    pub fn maxlen(&self) -> usize {
        self.maxlen
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn true_length(&self) -> usize {
        self.true_length
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major `maxlen × dim` values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// The non-padding prefix, row-major.
    pub fn used(&self) -> &[f64] {
        &self.data[..self.true_length * self.dim]
    }
}

/// Looks up each token (OOV for unknown ones), keeping the first `maxlen`.
pub fn encode_sequence<S: AsRef<str>>(tokens: &[S], embedding: &EmbeddingMatrix) -> EncodedSequence {
    let (maxlen, dim) = (embedding.maxlen(), embedding.dim());
    let true_length = tokens.len().min(maxlen);
    let mut data = vec![0.0; maxlen * dim];
    for (i, tok) in tokens.iter().take(maxlen).enumerate() {
        data[i * dim..(i + 1) * dim].copy_from_slice(embedding.vector(tok.as_ref()));
    }
    EncodedSequence {
        maxlen,
        dim,
        data,
        true_length,
    }
}

/// Mean of the non-padding rows; zero when the sequence is empty.
pub fn pool_features(seq: &EncodedSequence) -> Vec<f64> {
    let mut out = vec![0.0; seq.dim];
    if seq.true_length == 0 {
        return out;
    }
    for r in 0..seq.true_length {
        for (o, v) in out.iter_mut().zip(seq.row(r)) {
            *o += v;
        }
    }
    let n = seq.true_length as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
