//! Per-process hardware counter samples (CPU-process state).
//!
//! Three events per reading: last-level cache accesses (`l3_tca`), misses
//! (`l3_tcm`) and retired instructions (`tot_ins`; some tools spell it
//! `TOT_INST`). Traces are CSV with the header
//! `timestamp_us,pid,process_name,l3_tca,l3_tcm,tot_ins,label`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal};

use crate::error::{Error, Result};

pub mod live;

pub use live::{collect_live, CollectorCapability, LiveConfig, LiveStats, LiveStream};

pub const TRACE_HEADER: [&str; 7] = [
    "timestamp_us",
    "pid",
    "process_name",
    "l3_tca",
    "l3_tcm",
    "tot_ins",
    "label",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpsSample {
    pub timestamp_us: u64,
    pub pid: u32,
    pub process_name: String,
    pub l3_tca: u64,
    pub l3_tcm: u64,
    pub tot_ins: u64,
    /// 1 = malicious, 0 = benign; `None` for unlabeled live data.
    pub label: Option<u8>,
}

impl CpsSample {
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.l3_tcm > self.l3_tca {
            return Err("cache misses exceed accesses".into());
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(format!("label {l} is not binary"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpsFeatureRow {
    pub l3_tca: u64,
    pub l3_tcm: u64,
    pub tot_ins: u64,
    pub miss_rate: f64,
    pub label: Option<u8>,
}

impl CpsFeatureRow {
    pub const NAMES: [&'static str; 4] = ["l3_tca", "l3_tcm", "tot_ins", "miss_rate"];

    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.l3_tca as f64,
            self.l3_tcm as f64,
            self.tot_ins as f64,
            self.miss_rate,
        ]
    }
}

pub fn derive_features(samples: &[CpsSample]) -> Vec<CpsFeatureRow> {
    samples
        .iter()
        .map(|s| CpsFeatureRow {
            l3_tca: s.l3_tca,
            l3_tcm: s.l3_tcm,
            tot_ins: s.tot_ins,
            miss_rate: if s.l3_tca == 0 {
                0.0
            } else {
                s.l3_tcm as f64 / s.l3_tca as f64
            },
            label: s.label,
        })
        .collect()
}

pub fn parse_trace(path: &Path) -> Result<Vec<CpsSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file)
}

/// Parses and validates a trace. Errors carry the 1-based file line.
pub fn read_trace<R: Read>(reader: R) -> Result<Vec<CpsSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => {
            let header = header.map_err(|e| csv_error(&e))?;
            if header.iter().ne(TRACE_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{}`", TRACE_HEADER.join(",")),
                });
            }
        }
    }

    let mut last_ts: HashMap<u32, u64> = HashMap::new();
    let mut samples = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(&e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != TRACE_HEADER.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", TRACE_HEADER.len(), rec.len()),
            });
        }
        let field = |i: usize| rec.get(i).unwrap_or_default();
        fn num<T: std::str::FromStr>(v: &str, name: &str, line: u64) -> Result<T> {
            v.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid {name} {v:?}"),
            })
        }
        let label = match field(6).trim() {
            "" => None,
            v => Some(num::<u8>(v, "label", line)?),
        };
        let sample = CpsSample {
            timestamp_us: num(field(0), "timestamp_us", line)?,
            pid: num(field(1), "pid", line)?,
            process_name: field(2).to_string(),
            l3_tca: num(field(3), "l3_tca", line)?,
            l3_tcm: num(field(4), "l3_tcm", line)?,
            tot_ins: num(field(5), "tot_ins", line)?,
            label,
        };
        if sample.l3_tcm > sample.l3_tca {
            return Err(Error::MissesExceedAccesses { line });
        }
        sample
            .check()
            .map_err(|msg| Error::Parse { line, msg })?;
        let prev = last_ts.entry(sample.pid).or_insert(sample.timestamp_us);
        if sample.timestamp_us < *prev {
            return Err(Error::Parse {
                line,
                msg: format!("timestamp goes backwards for pid {}", sample.pid),
            });
        }
        *prev = sample.timestamp_us;
        samples.push(sample);
    }
    Ok(samples)
}

fn csv_error(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line()),
        msg: e.to_string(),
    }
}

pub fn write_trace<W: Write>(samples: &[CpsSample], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io = |e: csv::Error| Error::io("<trace>", std::io::Error::other(e));
    w.write_record(TRACE_HEADER).map_err(io)?;
    for s in samples {
        w.write_record([
            s.timestamp_us.to_string(),
            s.pid.to_string(),
            s.process_name.clone(),
            s.l3_tca.to_string(),
            s.l3_tcm.to_string(),
            s.tot_ins.to_string(),
            s.label.map(|l| l.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))
}

pub fn save_trace(samples: &[CpsSample], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(samples, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Distribution of one class of synthetic processes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    /// Mean cache accesses per sample (log-normal).
    pub mean_accesses: f64,
    /// Mean of the Beta-distributed miss ratio.
    pub mean_miss_ratio: f64,
    /// Beta concentration (`alpha + beta`); larger is tighter.
    pub concentration: f64,
    /// Mean instructions per sample independent of misses (log-normal).
    pub mean_instructions: f64,
    /// Extra instructions retired per cache miss.
    pub instructions_per_miss: f64,
    /// Log-space standard deviation of the log-normal draws.
    pub dispersion: f64,
}

impl ClassProfile {
    pub fn benign() -> Self {
        ClassProfile {
            mean_accesses: 20_000.0,
            mean_miss_ratio: 0.05,
            concentration: 40.0,
            mean_instructions: 2_000_000.0,
            instructions_per_miss: 0.0,
            dispersion: 0.6,
        }
    }

    /// Flush+Reload style probing: frequent evictions, and the instruction
    /// count grows with the number of misses as the attack loop retries.
    pub fn attack() -> Self {
        ClassProfile {
            mean_accesses: 30_000.0,
            mean_miss_ratio: 0.5,
            concentration: 20.0,
            mean_instructions: 200_000.0,
            instructions_per_miss: 40.0,
            dispersion: 0.5,
        }
    }

    fn validate(&self, which: &str) -> Result<()> {
        let ok = self.mean_accesses > 0.0
            && self.mean_miss_ratio > 0.0
            && self.mean_miss_ratio < 1.0
            && self.concentration > 0.0
            && self.mean_instructions > 0.0
            && self.instructions_per_miss >= 0.0
            && self.dispersion >= 0.0
            && [
                self.mean_accesses,
                self.concentration,
                self.mean_instructions,
                self.instructions_per_miss,
                self.dispersion,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid {which} profile")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    n_benign: usize,
    n_attack: usize,
    benign: ClassProfile,
    attack: ClassProfile,
    interval_us: u64,
    seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_benign: 1000,
            n_attack: 250,
            benign: ClassProfile::benign(),
            attack: ClassProfile::attack(),
            interval_us: 1000,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// Rejects profiles where attacks would not miss more often than benign
    /// processes.
    pub fn new(
        n_benign: usize,
        n_attack: usize,
        benign: ClassProfile,
        attack: ClassProfile,
        seed: u64,
    ) -> Result<Self> {
        benign.validate("benign")?;
        attack.validate("attack")?;
        if attack.mean_miss_ratio <= benign.mean_miss_ratio {
            return Err(Error::InvalidConfig(
                "attack mean miss ratio must exceed the benign one".into(),
            ));
        }
        Ok(SynthConfig {
            n_benign,
            n_attack,
            benign,
            attack,
            interval_us: 1000,
            seed,
        })
    }

    pub fn with_counts(mut self, n_benign: usize, n_attack: usize) -> Self {
        self.n_benign = n_benign;
        self.n_attack = n_attack;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_interval_us(mut self, interval_us: u64) -> Self {
        self.interval_us = interval_us.max(1);
        self
    }

    pub fn n_benign(&self) -> usize {
        self.n_benign
    }

    pub fn n_attack(&self) -> usize {
        self.n_attack
    }

    pub fn benign(&self) -> &ClassProfile {
        &self.benign
    }

    pub fn attack(&self) -> &ClassProfile {
        &self.attack
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

const BENIGN_PROCESSES: &[&str] = &[
    "nginx", "postgres", "python3", "bash", "sshd", "gcc", "firefox", "redis-server",
];
const ATTACK_PROCESSES: &[&str] = &["spectre_v1", "flush_reload"];

struct ClassSampler {
    accesses: LogNormal<f64>,
    miss_ratio: Beta<f64>,
    instructions: LogNormal<f64>,
    instructions_per_miss: f64,
}

impl ClassSampler {
    fn new(p: &ClassProfile) -> Result<Self> {
        let lognormal = |mean: f64| {
            // E[X] = exp(mu + sigma^2 / 2)
            let mu = mean.ln() - p.dispersion * p.dispersion / 2.0;
            LogNormal::new(mu, p.dispersion)
                .map_err(|e| Error::InvalidConfig(format!("log-normal: {e}")))
        };
        let a = p.mean_miss_ratio * p.concentration;
        let b = (1.0 - p.mean_miss_ratio) * p.concentration;
        Ok(ClassSampler {
            accesses: lognormal(p.mean_accesses)?,
            miss_ratio: Beta::new(a, b).map_err(|e| Error::InvalidConfig(format!("beta: {e}")))?,
            instructions: lognormal(p.mean_instructions)?,
            instructions_per_miss: p.instructions_per_miss,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (u64, u64, u64) {
        let tca = self.accesses.sample(rng).round().max(0.0) as u64;
        let ratio = self.miss_ratio.sample(rng).clamp(0.0, 1.0);
        let tcm = ((tca as f64 * ratio).round() as u64).min(tca);
        let ins = self.instructions.sample(rng) + self.instructions_per_miss * tcm as f64;
        (tca, tcm, ins.round() as u64)
    }
}

/// Generates a labeled trace. Output is a shuffled mix of both classes with
/// timestamps increasing by the configured interval.
pub fn synth_trace(config: &SynthConfig) -> Result<Vec<CpsSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let benign = ClassSampler::new(&config.benign)?;
    let attack = ClassSampler::new(&config.attack)?;

    let mut labels: Vec<u8> = std::iter::repeat_n(0u8, config.n_benign)
        .chain(std::iter::repeat_n(1u8, config.n_attack))
        .collect();
    labels.shuffle(&mut rng);

    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let (sampler, names, pid_base) = if label == 1 {
                (&attack, ATTACK_PROCESSES, 40_000)
            } else {
                (&benign, BENIGN_PROCESSES, 1_000)
            };
            let which = rng.random_range(0..names.len());
            let (l3_tca, l3_tcm, tot_ins) = sampler.draw(&mut rng);
            CpsSample {
                timestamp_us: i as u64 * config.interval_us,
                pid: pid_base + which as u32,
                process_name: names[which].to_string(),
                l3_tca,
                l3_tcm,
                tot_ins,
                label: Some(label),
            }
        })
        .collect();
    Ok(samples)
}
