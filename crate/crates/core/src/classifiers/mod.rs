//! The five detector families and their shared train / score / persist surface.
//!
//! | kind | model |
//! |------|-------|
//! | `nb`  | Gaussian naive Bayes |
//! | `lr`  | L2-regularized logistic regression, full-batch gradient descent |
//! | `svc` | linear SVM (hinge + L2, stochastic subgradient), Platt-calibrated |
//! | `rf`  | random forest of unpruned Gini trees |
//! | `cnn` | 1D convolution → ReLU → global max pool → dense → sigmoid |
//!
//! Vector models consume fixed-width rows (pooled gadget embeddings or CPS
//! feature rows); the CNN consumes full encoded sequences.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod cnn;
pub mod dataset;
pub mod forest;
pub mod logistic;
pub mod naive_bayes;
pub mod standardize;
pub mod svc;

pub use cnn::{CnnParams, Conv1dNet};
pub use dataset::{Dataset, FeatureSchema, Features, Input};
pub use forest::{DecisionTree, RandomForest, RfParams};
pub use logistic::{LogisticModel, LrParams};
pub use naive_bayes::{GaussianNb, NbParams};
pub use standardize::Standardizer;
pub use svc::{LinearSvc, SvcParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "specdet-model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Cnn,
    Nb,
    Svc,
    Lr,
    Rf,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Cnn,
        ClassifierKind::Nb,
        ClassifierKind::Svc,
        ClassifierKind::Lr,
        ClassifierKind::Rf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Cnn => "cnn",
            ClassifierKind::Nb => "nb",
            ClassifierKind::Svc => "svc",
            ClassifierKind::Lr => "lr",
            ClassifierKind::Rf => "rf",
        }
    }

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::Cnn => "1D-CNN",
            ClassifierKind::Nb => "NB",
            ClassifierKind::Svc => "SVC",
            ClassifierKind::Lr => "LR",
            ClassifierKind::Rf => "RF",
        }
    }

    pub fn wants_sequences(self) -> bool {
        self == ClassifierKind::Cnn
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    /// Z-score vector inputs with training-set mean and standard deviation.
    pub standardize: bool,
    pub nb: NbParams,
    pub lr: LrParams,
    pub svc: SvcParams,
    pub rf: RfParams,
    pub cnn: CnnParams,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            seed,
            standardize: false,
            nb: NbParams::default(),
            lr: LrParams::default(),
            svc: SvcParams::default(),
            rf: RfParams::default(),
            cnn: CnnParams::default(),
        }
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayes(GaussianNb),
    Logistic(LogisticModel),
    Svc(LinearSvc),
    Forest(RandomForest),
    Cnn(Conv1dNet),
}

impl ModelParams {
    fn kind(&self) -> ClassifierKind {
        match self {
            ModelParams::NaiveBayes(_) => ClassifierKind::Nb,
            ModelParams::Logistic(_) => ClassifierKind::Lr,
            ModelParams::Svc(_) => ClassifierKind::Svc,
            ModelParams::Forest(_) => ClassifierKind::Rf,
            ModelParams::Cnn(_) => ClassifierKind::Cnn,
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            ModelParams::NaiveBayes(m) => m.is_finite(),
            ModelParams::Logistic(m) => m.is_finite(),
            ModelParams::Svc(m) => m.is_finite(),
            ModelParams::Forest(m) => m.is_finite(),
            ModelParams::Cnn(m) => m.is_finite(),
        }
    }
}

/// A trained detector with everything needed to score new inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub kind: ClassifierKind,
    pub feature_schema: FeatureSchema,
    pub train_config: TrainConfig,
    pub standardizer: Option<Standardizer>,
    pub params: ModelParams,
}

/// Fits a `kind` model. Deterministic for a fixed `config.seed`.
pub fn train(kind: ClassifierKind, dataset: &Dataset, config: &TrainConfig) -> Result<ModelArtifact> {
    if dataset.is_empty() {
        return Err(Error::TooSmall { need: 2, got: 0 });
    }
    let (neg, pos) = dataset.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::DegenerateLabels);
    }
    let schema = dataset.schema();
    let labels = dataset.labels();

    let (standardizer, params) = match (&dataset.features, kind) {
        (Features::Sequence { rows, .. }, ClassifierKind::Cnn) => {
            let net = cnn::fit(rows, labels, &config.cnn, config.seed)?;
            (None, ModelParams::Cnn(net))
        }
        (Features::Vector { rows, .. }, k) if k != ClassifierKind::Cnn => {
            let standardizer = config.standardize.then(|| Standardizer::fit(rows));
            let transformed;
            let xs: &[Vec<f64>] = match &standardizer {
                Some(s) => {
                    transformed = rows.iter().map(|r| s.transform(r)).collect::<Vec<_>>();
                    &transformed
                }
                None => rows,
            };
            let params = match k {
                ClassifierKind::Nb => ModelParams::NaiveBayes(GaussianNb::fit(xs, labels, &config.nb)),
                ClassifierKind::Lr => ModelParams::Logistic(LogisticModel::fit(xs, labels, &config.lr)),
                ClassifierKind::Svc => ModelParams::Svc(LinearSvc::fit(xs, labels, &config.svc, config.seed)),
                ClassifierKind::Rf => ModelParams::Forest(RandomForest::fit(xs, labels, &config.rf, config.seed)),
                ClassifierKind::Cnn => unreachable!(),
            };
            (standardizer, params)
        }
        _ => {
            let expected = if kind.wants_sequences() {
                "sequence features".to_string()
            } else {
                "vector features".to_string()
            };
            return Err(Error::SchemaMismatch {
                expected: format!("{expected} for {kind}"),
                found: schema.to_string(),
            });
        }
    };

    let artifact = ModelArtifact {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        feature_schema: schema,
        train_config: config.clone(),
        standardizer,
        params,
    };
    if !artifact.params.all_finite() {
        return Err(Error::InvalidConfig(format!(
            "{kind} training produced non-finite parameters"
        )));
    }
    Ok(artifact)
}

impl ModelArtifact {
    /// Probability-like score in `[0, 1]` that `input` is Spectre-related.
    pub fn predict_score(&self, input: Input<'_>) -> Result<f64> {
        let found = input.schema();
        if found != self.feature_schema {
            return Err(Error::SchemaMismatch {
                expected: self.feature_schema.to_string(),
                found: found.to_string(),
            });
        }
        let score = match (&self.params, input) {
            (ModelParams::Cnn(net), Input::Sequence(seq)) => net.score(seq.as_slice()),
            (params, Input::Vector(x)) => {
                let owned;
                let x = match &self.standardizer {
                    Some(s) => {
                        owned = s.transform(x);
                        owned.as_slice()
                    }
                    None => x,
                };
                match params {
                    ModelParams::NaiveBayes(m) => m.score(x),
                    ModelParams::Logistic(m) => m.score(x),
                    ModelParams::Svc(m) => m.score(x),
                    ModelParams::Forest(m) => m.score(x),
                    ModelParams::Cnn(_) => unreachable!("schema checked above"),
                }
            }
            (_, Input::Sequence(_)) => unreachable!("schema checked above"),
        };
        Ok(if score.is_nan() { 0.5 } else { score.clamp(0.0, 1.0) })
    }

    /// 1 when the score reaches `threshold`.
    pub fn predict_label(&self, input: Input<'_>, threshold: f64) -> Result<u8> {
        Ok(u8::from(self.predict_score(input)? >= threshold))
    }

    pub fn to_text(&self) -> String {
        let body = serde_json::to_string(self).expect("model serialization is infallible");
        format!("{MODEL_MAGIC} format_version={MODEL_FORMAT_VERSION}\n{body}\n")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let mut fields = header.split_whitespace();
        if fields.next() != Some(MODEL_MAGIC) {
            return Err(Error::Corrupt {
                line: 1,
                column: 1,
                msg: "not a model file".into(),
            });
        }
        let version = fields
            .find_map(|f| f.strip_prefix("format_version="))
            .unwrap_or("<missing>");
        if version != MODEL_FORMAT_VERSION.to_string() {
            return Err(Error::VersionMismatch {
                expected: MODEL_FORMAT_VERSION,
                found: version.to_string(),
            });
        }
        let model: ModelArtifact = serde_json::from_str(body).map_err(|e| Error::corrupt(&e, 1))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: MODEL_FORMAT_VERSION,
                found: model.format_version.to_string(),
            });
        }
        if model.params.kind() != model.kind || !model.params.all_finite() {
            return Err(Error::Corrupt {
                line: 2,
                column: 1,
                msg: "parameters do not match the declared model".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn save_model(model: &ModelArtifact, path: &Path) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    ModelArtifact::load(path)
}

#[cfg(test)]
mod tests;
