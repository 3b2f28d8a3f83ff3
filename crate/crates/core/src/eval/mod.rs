//! Evaluation: confusion counts, the six classification metrics, ROC/AUC,
//! train/validation/test splits, k-fold cross-validation and timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{train, ClassifierKind, Dataset, ModelArtifact, TrainConfig};
use crate::corpus::check_label;
use crate::error::{Error, Result};

mod report;
mod split;

pub use report::{markdown_report, metrics_csv, roc_csv, ReportRow, METRICS_CSV_HEADER};
pub use split::{kfold, split, split_indices, KFoldSpec, Split, SplitSpec};

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Observations scored by [`time_prediction`].
pub const PRT_OBSERVATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Spectre predicted Spectre.
    pub tp: u64,
    /// Benign predicted Spectre.
    pub fp: u64,
    /// Spectre predicted benign.
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Benign predicted benign.
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        check_label(t)?;
        check_label(p)?;
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub fbeta: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub gmean: f64,
    pub avg: f64,
    pub beta: f64,
    pub auc: Option<f64>,
    /// Training (and cross-validation) wall time.
    pub trt_s: Option<f64>,
    /// Wall time to score [`PRT_OBSERVATIONS`] inputs.
    pub prt_s: Option<f64>,
}

/// `a / b`, with `0 / 0 = 0`.
fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn metrics(cm: &ConfusionMatrix, beta: f64) -> MetricsReport {
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    metrics_from_rates(ratio(tp, tp + fp), ratio(tp, tp + fn_), ratio(tn, fp + tn), beta)
}

/// Derives the composite metrics from precision, recall and specificity.
pub fn metrics_from_rates(precision: f64, recall: f64, specificity: f64, beta: f64) -> MetricsReport {
    let (p, r, s) = (precision, recall, specificity);
    let b2 = beta * beta;
    let f1 = ratio(2.0 * p * r, p + r);
    let fbeta = ratio((1.0 + b2) * p * r, b2 * p + r);
    let gmean = (r * s).sqrt();
    let avg = (f1 + fbeta + p + r + s + gmean) / 6.0;
    MetricsReport {
        f1,
        fbeta,
        precision: p,
        recall: r,
        specificity: s,
        gmean,
        avg,
        beta,
        auc: None,
        trt_s: None,
        prt_s: None,
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / v.len() as f64)
}

/// Field-wise mean; an optional field survives only if every report has it.
pub fn mean_report(reports: &[MetricsReport]) -> Option<MetricsReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    // Offsets from the first report, so identical reports average exactly.
    let mean = |f: fn(&MetricsReport) -> f64| f(first) + reports.iter().map(|r| f(r) - f(first)).sum::<f64>() / n;
    Some(MetricsReport {
        f1: mean(|r| r.f1),
        fbeta: mean(|r| r.fbeta),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        specificity: mean(|r| r.specificity),
        gmean: mean(|r| r.gmean),
        avg: mean(|r| r.avg),
        beta: first.beta,
        auc: mean_opt(reports.iter().map(|r| r.auc)),
        trt_s: mean_opt(reports.iter().map(|r| r.trt_s)),
        prt_s: mean_opt(reports.iter().map(|r| r.prt_s)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this are called positive; the first point uses +∞.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps every distinct score from high to low. Tied scores move as one
/// step, which gives tied positive/negative pairs half credit.
pub fn roc(y_true: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    for &y in y_true {
        check_label(y)?;
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Precondition("ROC scores must be finite".into()));
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count() as f64;
    let neg = y_true.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::AucUndefined(if pos == 0.0 {
            "no positive samples".into()
        } else {
            "no negative samples".into()
        }));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            if y_true[order[k]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        let prev = *points.last().expect("starts non-empty");
        let p = RocPoint {
            threshold,
            fpr: fp / neg,
            tpr: tp / pos,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// Seconds to score [`PRT_OBSERVATIONS`] inputs drawn cyclically from
/// `pool`, after one untimed warm-up pass.
pub fn time_prediction(model: &ModelArtifact, pool: &Dataset) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::TooSmall { need: 1, got: 0 });
    }
    let mut sink = 0.0;
    for i in 0..pool.len().min(PRT_OBSERVATIONS) {
        sink += model.predict_score(pool.input(i))?;
    }
    let start = Instant::now();
    for i in 0..PRT_OBSERVATIONS {
        sink += model.predict_score(pool.input(i % pool.len()))?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    Ok(elapsed.max(f64::MIN_POSITIVE))
}

/// Scores every row of `data` and compares against `threshold`.
pub fn score_dataset(model: &ModelArtifact, data: &Dataset) -> Result<Vec<f64>> {
    (0..data.len()).map(|i| model.predict_score(data.input(i))).collect()
}

fn labels_at(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub folds: Vec<MetricsReport>,
    pub mean: MetricsReport,
    /// Total wall time of all fold trainings and validations.
    pub trt_s: f64,
}

/// k-fold cross-validation. Fold `i` trains with seed `config.seed + i`.
/// Runs serially so the recorded time is not distorted by sibling folds.
pub fn kfold_cv(
    kind: ClassifierKind,
    data: &Dataset,
    spec: &KFoldSpec,
    config: &TrainConfig,
    beta: f64,
    threshold: f64,
) -> Result<CvResult> {
    let folds = kfold(data.len(), spec)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut reports = Vec::with_capacity(folds.len());
    let start = Instant::now();
    for (i, held_out) in folds.iter().enumerate() {
        let mut in_fold = vec![false; data.len()];
        held_out.iter().for_each(|&j| in_fold[j] = true);
        let train_idx: Vec<usize> = all.iter().copied().filter(|&j| !in_fold[j]).collect();
        let mut fold_config = config.clone();
        fold_config.seed = config.seed.wrapping_add(i as u64);
        let model = train(kind, &data.subset(&train_idx), &fold_config)?;
        let val = data.subset(held_out);
        let scores = score_dataset(&model, &val)?;
        let cm = confusion(val.labels(), &labels_at(&scores, threshold))?;
        let mut r = metrics(&cm, beta);
        r.auc = roc(val.labels(), &scores).ok().map(|c| c.auc);
        reports.push(r);
    }
    let trt_s = start.elapsed().as_secs_f64();
    let mut mean = mean_report(&reports).expect("k >= 2 folds");
    mean.trt_s = Some(trt_s);
    Ok(CvResult {
        folds: reports,
        mean,
        trt_s,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub split: SplitSpec,
    /// `None` skips cross-validation.
    pub kfold: Option<KFoldSpec>,
    pub train: TrainConfig,
    pub beta: f64,
    pub threshold: f64,
}

impl EvalConfig {
    pub fn new(seed: u64) -> Self {
        EvalConfig {
            split: SplitSpec::new(seed),
            kfold: Some(KFoldSpec::new(10, seed)),
            train: TrainConfig::new(seed),
            beta: DEFAULT_BETA,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub kind: ClassifierKind,
    pub cv: Option<CvResult>,
    pub test: MetricsReport,
    pub confusion: ConfusionMatrix,
    /// `None` when the test partition holds a single class.
    pub roc: Option<RocCurve>,
    pub model: ModelArtifact,
}

impl Evaluation {
    pub fn row(&self) -> ReportRow<'_> {
        ReportRow {
            kind: self.kind,
            cv: self.cv.as_ref().map(|c| &c.mean),
            test: &self.test,
        }
    }
}

/// Split, cross-validate on train+validation, then fit on the training
/// partition and score the held-out test partition.
pub fn evaluate(kind: ClassifierKind, data: &Dataset, config: &EvalConfig) -> Result<Evaluation> {
    let parts = split_indices(data.labels(), &config.split)?;
    let cv = match &config.kfold {
        Some(spec) => {
            let mut dev = parts.train.clone();
            dev.extend_from_slice(&parts.val);
            Some(kfold_cv(kind, &data.subset(&dev), spec, &config.train, config.beta, config.threshold)?)
        }
        None => None,
    };
    let train_set = data.subset(&parts.train);
    let test_set = data.subset(&parts.test);
    let start = Instant::now();
    let model = train(kind, &train_set, &config.train)?;
    let train_s = start.elapsed().as_secs_f64();

    let scores = score_dataset(&model, &test_set)?;
    let cm = confusion(test_set.labels(), &labels_at(&scores, config.threshold))?;
    let roc = match roc(test_set.labels(), &scores) {
        Ok(c) => Some(c),
        Err(Error::AucUndefined(why)) => {
            log::warn!("{kind}: test ROC skipped: {why}");
            None
        }
        Err(e) => return Err(e),
    };
    let mut test = metrics(&cm, config.beta);
    test.auc = roc.as_ref().map(|c| c.auc);
    test.trt_s = Some(cv.as_ref().map_or(train_s, |c| c.trt_s));
    test.prt_s = Some(time_prediction(&model, &test_set)?);
    Ok(Evaluation {
        kind,
        cv,
        test,
        confusion: cm,
        roc,
        model,
    })
}

#[cfg(test)]
mod tests;
