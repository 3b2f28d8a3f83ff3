//! Gadget corpus: ingest labeled assembly files, strip assembler noise, tokenize.
//!
//! Labels come from which directory a file was ingested from, never from its
//! content. A manifest is persisted as one JSON object per line with a fixed
//! field order (`id, label, source, raw_text, clean_text, tokens`).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assembler directives dropped during preprocessing. Entries ending in `*`
/// match by prefix.
pub const REMOVED_DIRECTIVES: &[&str] = &[
    ".file", ".ident", ".section", ".text", ".globl", ".type", ".size", ".align", ".cfi_*",
    ".loc",
];

/// Bumped whenever the directive list or the cleaning rules change.
pub const PREPROCESS_VERSION: u32 = 1;

/// Separators that split tokens and are themselves dropped.
const TOKEN_SEPARATORS: &[char] = &[',', '(', ')', '[', ']', ':'];

const ASSEMBLY_EXTENSIONS: &[&str] = &["s", "S", "asm"];

pub fn check_label(label: u8) -> Result<u8> {
    if label <= 1 {
        Ok(label)
    } else {
        Err(Error::InvalidLabel(label))
    }
}

/// One labeled assembly function (1 = victim, 0 = non-victim).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GadgetRecord {
    pub id: String,
    pub label: u8,
    pub source: String,
    pub raw_text: String,
    pub clean_text: String,
    pub tokens: Vec<String>,
}

impl GadgetRecord {
    pub fn new(id: String, label: u8, source: String, raw_text: String) -> Result<Self> {
        check_label(label)?;
        let clean_text = preprocess(&raw_text);
        let tokens = tokenize(&clean_text);
        Ok(GadgetRecord {
            id,
            label,
            source,
            raw_text,
            clean_text,
            tokens,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    records: Vec<GadgetRecord>,
    ids: HashSet<String>,
}

impl CorpusManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<GadgetRecord>) -> Result<Self> {
        let mut manifest = Self::new();
        manifest.extend(records)?;
        Ok(manifest)
    }

    pub fn push(&mut self, record: GadgetRecord) -> Result<()> {
        check_label(record.label)?;
        if !self.ids.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = GadgetRecord>) -> Result<()> {
        for r in records {
            self.push(r)?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[GadgetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-label counts; both labels are always present.
    pub fn class_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::from([(0, 0), (1, 0)]);
        for r in &self.records {
            *counts.entry(r.label).or_default() += 1;
        }
        counts
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serialization is infallible");
            writeln!(w, "{line}").map_err(|e| Error::io("<manifest>", e))?;
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
        let mut manifest = Self::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: GadgetRecord =
                serde_json::from_str(&line).map_err(|e| Error::corrupt(&e, i))?;
            if tokenize(&record.clean_text) != record.tokens {
                return Err(Error::Parse {
                    line: i as u64 + 1,
                    msg: "tokens do not match clean_text".into(),
                });
            }
            manifest.push(record).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(manifest)
    }
}

/// Non-fatal problems encountered while ingesting a directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestLog {
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<GadgetRecord>,
    pub log: IngestLog,
}

/// Reads every assembly file under `dir` (recursively) and labels it `label`.
///
/// Records come back in lexicographic path order no matter how the reads
/// were scheduled. Files that are not valid UTF-8 text, or that don't carry
/// an assembly extension, are skipped and noted in the log.
pub fn ingest_gadget_dir(dir: &Path, label: u8) -> Result<Ingested> {
    check_label(label)?;
    let meta = fs::metadata(dir).map_err(|e| Error::io(dir, e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }

    let mut log = IngestLog::default();
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let is_asm = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| ASSEMBLY_EXTENSIONS.contains(&e));
        if is_asm {
            paths.push(entry.into_path());
        } else {
            log.warnings.push(format!(
                "skipped {}: not an assembly file",
                entry.path().display()
            ));
        }
    }
    paths.sort();

    let read: Vec<(PathBuf, std::io::Result<Vec<u8>>)> = paths
        .into_par_iter()
        .map(|p| {
            let bytes = fs::read(&p);
            (p, bytes)
        })
        .collect();

    let mut records = Vec::with_capacity(read.len());
    for (path, bytes) in read {
        let bytes = bytes.map_err(|e| Error::io(&path, e))?;
        let text = match String::from_utf8(bytes) {
            Ok(t) if !t.contains('\0') => t,
            _ => {
                log.warnings
                    .push(format!("skipped {}: not a text file", path.display()));
                continue;
            }
        };
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        records.push(GadgetRecord::new(
            format!("{label}:{rel}"),
            label,
            path.to_string_lossy().into_owned(),
            text,
        )?);
    }
    for w in &log.warnings {
        log::warn!("{w}");
    }
    Ok(Ingested { records, log })
}

fn is_removed_directive(word: &str) -> bool {
    let word = word.to_lowercase();
    REMOVED_DIRECTIVES.iter().any(|d| match d.strip_suffix('*') {
        Some(prefix) => word.starts_with(prefix),
        None => word == *d,
    })
}

fn is_path_run(run: &str) -> bool {
    run.contains('/') || run.contains('\\')
}

fn clean_line(line: &str) -> String {
    let code = match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    };

    // Drop path-like runs (anything between whitespace/commas containing a
    // slash or backslash), keeping the commas themselves.
    let mut without_paths = String::with_capacity(code.len());
    let mut run = String::new();
    let flush = |run: &mut String, out: &mut String| {
        if !is_path_run(run) {
            out.push_str(run);
        }
        run.clear();
    };
    for c in code.chars() {
        if c.is_whitespace() || c == ',' {
            flush(&mut run, &mut without_paths);
            without_paths.push(c);
        } else {
            run.push(c);
        }
    }
    flush(&mut run, &mut without_paths);

    let collapsed = without_paths.split_whitespace().collect::<Vec<_>>().join(" ");

    // A removed directive swallows the rest of its statement.
    let mut cut = collapsed.len();
    let mut start = None;
    for (i, c) in collapsed.char_indices().chain(std::iter::once((collapsed.len(), ' '))) {
        let is_sep = c.is_whitespace() || TOKEN_SEPARATORS.contains(&c);
        match (is_sep, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                if is_removed_directive(&collapsed[s..i]) {
                    cut = s;
                    break;
                }
                start = None;
            }
            _ => {}
        }
    }
    collapsed[..cut].trim_end().to_string()
}

/// Strips comments, path strings, listed directives and redundant whitespace.
///
/// Surviving lines keep their order and are joined with `\n`; lines that end
/// up empty are dropped.
pub fn preprocess(raw_text: &str) -> String {
    raw_text
        .lines()
        .map(clean_line)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits on whitespace and `, ( ) [ ] :`, lowercasing each token.
pub fn tokenize(clean_text: &str) -> Vec<String> {
    clean_text
        .split(|c: char| c.is_whitespace() || TOKEN_SEPARATORS.contains(&c))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Splits an assembly listing into functions at non-local labels.
///
/// A label is an identifier followed by `:` at the start of a line; labels
/// starting with `.` are local and stay inside the current function. Text
/// before the first label is dropped when at least one label exists; a
/// listing without labels is returned whole under `fallback_name`.
pub fn split_functions(raw_text: &str, fallback_name: &str) -> Vec<(String, String)> {
    let mut functions: Vec<(String, Vec<&str>)> = Vec::new();
    for line in raw_text.lines() {
        if let Some(name) = function_label(line) {
            functions.push((name.to_string(), vec![line]));
        } else if let Some((_, body)) = functions.last_mut() {
            body.push(line);
        }
    }
    if functions.is_empty() {
        if raw_text.trim().is_empty() {
            return Vec::new();
        }
        return vec![(fallback_name.to_string(), raw_text.to_string())];
    }
    functions
        .into_iter()
        .map(|(name, body)| (name, body.join("\n")))
        .collect()
}

fn function_label(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    let (name, _) = trimmed.split_once(':')?;
    let valid = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$' || c == '.');
    valid.then_some(name)
}
