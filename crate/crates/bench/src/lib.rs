//! Fixtures shared by the benchmarks in `benches/`.

use specdet_core::classifiers::{ClassifierKind, Dataset, ModelArtifact, TrainConfig};
use specdet_core::corpus::{CorpusManifest, GadgetRecord};
use specdet_core::cps::{synth_trace, SynthConfig};
use specdet_core::train;

/// Labeled CPS feature rows from a synthetic trace.
pub fn cps_dataset(benign: usize, attack: usize, seed: u64) -> Dataset {
    let trace = synth_trace(&SynthConfig::default().with_counts(benign, attack).with_seed(seed))
        .expect("synthetic trace");
    Dataset::from_trace(&trace).expect("labeled trace")
}

pub fn trained(kind: ClassifierKind, data: &Dataset) -> ModelArtifact {
    train(kind, data, &TrainConfig::new(0).with_standardize(true)).expect("training")
}

/// `docs` gadget bodies of `len` tokens drawn from a small fixed instruction alphabet.
pub fn token_corpus(docs: usize, len: usize) -> CorpusManifest {
    const OPS: [&str; 12] = [
        "mov", "add", "cmp", "jae", "movzx", "shl", "lea", "ret", "REG", "MEM", "IMM", "clflush",
    ];
    let records = (0..docs)
        .map(|d| {
            let body: Vec<&str> = (0..len).map(|i| OPS[(i * 7 + d * 3 + i / 5) % OPS.len()]).collect();
            GadgetRecord::new(format!("g{d}"), (d % 2) as u8, String::new(), body.join(" ")).expect("record")
        })
        .collect();
    CorpusManifest::from_records(records).expect("manifest")
}
