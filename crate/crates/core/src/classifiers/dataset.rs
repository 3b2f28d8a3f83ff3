use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{check_label, CorpusManifest};
use crate::cps::{derive_features, CpsSample};
use crate::embedding::{encode_sequence, pool_features, EmbeddingMatrix, EncodedSequence};
use crate::error::{Error, Result};

pub const FEATURES_FORMAT_VERSION: u32 = 1;
const FEATURES_MAGIC: &str = "specdet-features";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSchema {
    Vector { dim: usize },
    Sequence { steps: usize, channels: usize },
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSchema::Vector { dim } => write!(f, "vector[{dim}]"),
            FeatureSchema::Sequence { steps, channels } => write!(f, "sequence[{steps}x{channels}]"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Vector(&'a [f64]),
    Sequence(&'a EncodedSequence),
}

impl Input<'_> {
    pub fn schema(&self) -> FeatureSchema {
        match self {
            Input::Vector(x) => FeatureSchema::Vector { dim: x.len() },
            Input::Sequence(s) => FeatureSchema::Sequence {
                steps: s.maxlen(),
                channels: s.dim(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Vector { dim: usize, rows: Vec<Vec<f64>> },
    Sequence { steps: usize, channels: usize, rows: Vec<EncodedSequence> },
}

/// Labeled rows of one uniform shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub(crate) features: Features,
    labels: Vec<u8>,
    ids: Vec<String>,
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

impl Dataset {
    pub fn vectors(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let ids = default_ids(rows.len());
        Self::vectors_with_ids(rows, labels, ids)
    }

    pub fn vectors_with_ids(rows: Vec<Vec<f64>>, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::SchemaMismatch {
                expected: FeatureSchema::Vector { dim }.to_string(),
                found: FeatureSchema::Vector { dim: bad.len() }.to_string(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature values must be finite".into()));
        }
        Self::assemble(Features::Vector { dim, rows }, labels, ids)
    }

    pub fn sequences(rows: Vec<EncodedSequence>, labels: Vec<u8>) -> Result<Self> {
        let ids = default_ids(rows.len());
        Self::sequences_with_ids(rows, labels, ids)
    }

    pub fn sequences_with_ids(rows: Vec<EncodedSequence>, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        let (steps, channels) = rows.first().map_or((0, 0), |s| (s.maxlen(), s.dim()));
        if let Some(bad) = rows.iter().find(|s| (s.maxlen(), s.dim()) != (steps, channels)) {
            return Err(Error::SchemaMismatch {
                expected: FeatureSchema::Sequence { steps, channels }.to_string(),
                found: Input::Sequence(bad).schema().to_string(),
            });
        }
        Self::assemble(Features::Sequence { steps, channels, rows }, labels, ids)
    }

    /// Encodes every gadget; `sequences = false` mean-pools each one into a
    /// single vector.
    pub fn from_gadgets(corpus: &CorpusManifest, embedding: &EmbeddingMatrix, sequences: bool) -> Result<Self> {
        let records = corpus.records();
        let ids = records.iter().map(|r| r.id.clone()).collect();
        let labels = records.iter().map(|r| r.label).collect();
        let encoded: Vec<EncodedSequence> = records.iter().map(|r| encode_sequence(&r.tokens, embedding)).collect();
        if sequences {
            Self::sequences_with_ids(encoded, labels, ids)
        } else {
            Self::vectors_with_ids(encoded.iter().map(pool_features).collect(), labels, ids)
        }
    }

    /// Counter feature rows of a labeled trace, with `pid:process_name` ids.
    pub fn from_trace(samples: &[CpsSample]) -> Result<Self> {
        let mut labels = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            labels.push(s.label.ok_or_else(|| {
                Error::Precondition(format!("trace sample {} (pid {}) has no label", i + 1, s.pid))
            })?);
        }
        let rows = derive_features(samples).iter().map(|r| r.to_vector()).collect();
        let ids = samples.iter().map(|s| format!("{}:{}", s.pid, s.process_name)).collect();
        Self::vectors_with_ids(rows, labels, ids)
    }

    fn assemble(features: Features, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        let n = match &features {
            Features::Vector { rows, .. } => rows.len(),
            Features::Sequence { rows, .. } => rows.len(),
        };
        if n != labels.len() {
            return Err(Error::LengthMismatch { left: n, right: labels.len() });
        }
        if n != ids.len() {
            return Err(Error::LengthMismatch { left: n, right: ids.len() });
        }
        for &l in &labels {
            check_label(l)?;
        }
        Ok(Dataset { features, labels, ids })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    /// `(negatives, positives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn schema(&self) -> FeatureSchema {
        match &self.features {
            Features::Vector { dim, .. } => FeatureSchema::Vector { dim: *dim },
            Features::Sequence { steps, channels, .. } => FeatureSchema::Sequence {
                steps: *steps,
                channels: *channels,
            },
        }
    }

    pub fn input(&self, i: usize) -> Input<'_> {
        match &self.features {
            Features::Vector { rows, .. } => Input::Vector(&rows[i]),
            Features::Sequence { rows, .. } => Input::Sequence(&rows[i]),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = match &self.features {
            Features::Vector { dim, rows } => Features::Vector {
                dim: *dim,
                rows: indices.iter().map(|&i| rows[i].clone()).collect(),
            },
            Features::Sequence { steps, channels, rows } => Features::Sequence {
                steps: *steps,
                channels: *channels,
                rows: indices.iter().map(|&i| rows[i].clone()).collect(),
            },
        };
        Dataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Mean-pools sequences into vectors; vector data is returned as is.
    pub fn pooled(&self) -> Dataset {
        match &self.features {
            Features::Vector { .. } => self.clone(),
            Features::Sequence { channels, rows, .. } => Dataset {
                features: Features::Vector {
                    dim: *channels,
                    rows: rows.iter().map(pool_features).collect(),
                },
                labels: self.labels.clone(),
                ids: self.ids.clone(),
            },
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<features>", e);
        let header = FileHeader {
            format: FEATURES_MAGIC.into(),
            format_version: FEATURES_FORMAT_VERSION,
            schema: self.schema(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
        for i in 0..self.len() {
            let (values, true_length) = match self.input(i) {
                Input::Vector(x) => (x.to_vec(), None),
                Input::Sequence(s) => (s.used().to_vec(), Some(s.true_length())),
            };
            let row = FileRow {
                id: self.ids[i].clone(),
                label: self.labels[i],
                true_length,
                values,
            };
            writeln!(w, "{}", serde_json::to_string(&row).expect("row serializes")).map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, first) = lines.next().ok_or(Error::Corrupt {
            line: 1,
            column: 1,
            msg: "empty features file".into(),
        })?;
        let first = first.map_err(|e| Error::io(path, e))?;
        let header: FileHeader = serde_json::from_str(&first).map_err(|e| Error::corrupt(&e, 0))?;
        if header.format != FEATURES_MAGIC {
            return Err(Error::Corrupt {
                line: 1,
                column: 1,
                msg: "not a features file".into(),
            });
        }
        if header.format_version != FEATURES_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FEATURES_FORMAT_VERSION,
                found: header.format_version.to_string(),
            });
        }

        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut vectors = Vec::new();
        let mut sequences = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: FileRow = serde_json::from_str(&line).map_err(|e| Error::corrupt(&e, i))?;
            let bad_row = |msg: String| Error::Parse { line: i as u64 + 1, msg };
            match header.schema {
                FeatureSchema::Vector { dim } => {
                    if row.values.len() != dim {
                        return Err(bad_row(format!("expected {dim} values, found {}", row.values.len())));
                    }
                    vectors.push(row.values);
                }
                FeatureSchema::Sequence { steps, channels } => {
                    let seq = EncodedSequence::from_rows(steps, channels, &row.values)
                        .map_err(|e| bad_row(e.to_string()))?;
                    if row.true_length.is_some_and(|t| t != seq.true_length()) {
                        return Err(bad_row("true_length disagrees with values".into()));
                    }
                    sequences.push(seq);
                }
            }
            ids.push(row.id);
            labels.push(row.label);
        }
        match header.schema {
            FeatureSchema::Vector { dim } => {
                let mut d = Self::vectors_with_ids(vectors, labels, ids)?;
                d.features = match d.features {
                    Features::Vector { rows, .. } => Features::Vector { dim, rows },
                    other => other,
                };
                Ok(d)
            }
            FeatureSchema::Sequence { steps, channels } => {
                let mut d = Self::sequences_with_ids(sequences, labels, ids)?;
                d.features = match d.features {
                    Features::Sequence { rows, .. } => Features::Sequence { steps, channels, rows },
                    other => other,
                };
                Ok(d)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    format: String,
    format_version: u32,
    schema: FeatureSchema,
}

#[derive(Serialize, Deserialize)]
struct FileRow {
    id: String,
    label: u8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    true_length: Option<usize>,
    values: Vec<f64>,
}
