//! Spectre gadget and cache side-channel attack detection.
//!
//! The pipeline runs from assembly gadgets ([`corpus`]) through token
//! embeddings ([`embedding`]) or hardware counter traces ([`cps`]) into the
//! detectors in [`classifiers`], scored by [`eval`].

pub mod classifiers;
pub mod corpus;
pub mod cps;
pub mod embedding;
pub mod error;
pub mod eval;

pub use classifiers::{
    load_model, save_model, train, ClassifierKind, Dataset, FeatureSchema, Input, ModelArtifact, TrainConfig,
};
pub use corpus::{ingest_gadget_dir, preprocess, tokenize, CorpusManifest, GadgetRecord};
pub use cps::{derive_features, parse_trace, synth_trace, write_trace, CpsFeatureRow, CpsSample, SynthConfig};
pub use embedding::{build_vocab, encode_sequence, train_skipgram, EmbeddingConfig, EmbeddingMatrix, EncodedSequence, Vocabulary};
pub use error::{Error, Result};
pub use eval::{
    confusion, evaluate, kfold, kfold_cv, metrics, roc, split, time_prediction, ConfusionMatrix, EvalConfig, KFoldSpec,
    MetricsReport, RocCurve, SplitSpec,
};
