//! Corpus ingestion: raw text documents become ordered [`Sample`]s.
//!
//! A document is split at section-delimiter lines (a full line of one
//! repeated character, by default 82 equals signs), each section is split
//! at `// File:` source markers, and every resulting unit receives a
//! global ordinal `sample_idx` assigned in document order.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("document {0} has empty content")]
    EmptyDocument(String),
    #[error("duplicate sample_idx {0}")]
    DuplicateIndex(u64),
    #[error("sample list is empty")]
    EmptySampleList,
    #[error("manifest line {line}: expected `path<TAB>category`")]
    BadManifestLine { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One raw corpus file, before any splitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub path: String,
    pub content: String,
    pub category: String,
}

impl RawDocument {
    pub fn new(
        path: impl Into<String>,
        content: impl Into<String>,
        category: impl Into<String>,
    ) -> Result<Self, IngestError> {
        let path = path.into();
        let content = content.into();
        if content.is_empty() {
            return Err(IngestError::EmptyDocument(path));
        }
        Ok(Self {
            path,
            content,
            category: category.into(),
        })
    }
}

/// One training-candidate text unit with provenance.
///
/// Within a finished corpus, `sample_idx` values are unique and contiguous
/// from 0. Intermediate stages (oversize splitting) may duplicate a parent
/// index across children; reindexing happens at assembly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_idx: u64,
    pub text: String,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
    pub origin_path: String,
}

/// How a document is cut into sections and file units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionPolicy {
    pub delimiter_char: char,
    pub delimiter_len: usize,
    pub marker_prefix: String,
    /// Keep the marker line at the head of each unit body.
    pub retain_marker: bool,
}

impl Default for SectionPolicy {
    fn default() -> Self {
        Self {
            delimiter_char: '=',
            delimiter_len: 82,
            marker_prefix: "// File:".to_string(),
            retain_marker: true,
        }
    }
}

/// True when `line` (without its terminator) is exactly the delimiter run.
/// Trailing whitespace and a trailing CR are tolerated; shorter or longer
/// runs, or indented runs, are content.
fn is_delimiter_line(line: &str, delimiter_char: char, delimiter_len: usize) -> bool {
    let body = line.trim_end();
    body.chars().count() == delimiter_len && body.chars().all(|c| c == delimiter_char)
}

/// Splits `content` at full-line delimiter runs. Sections containing no
/// non-whitespace characters are dropped; a document with no delimiter
/// yields one section.
pub fn split_sections(content: &str, delimiter_char: char, delimiter_len: usize) -> Vec<String> {
    assert!(delimiter_len >= 1, "delimiter_len must be at least 1");
    let mut sections = Vec::new();
    let mut current = String::new();
    for line in content.split_inclusive('\n') {
        let body = line.strip_suffix('\n').unwrap_or(line);
        if is_delimiter_line(body, delimiter_char, delimiter_len) {
            if current.contains(|c: char| !c.is_whitespace()) {
                sections.push(std::mem::take(&mut current));
            } else {
                current.clear();
            }
        } else {
            current.push_str(line);
        }
    }
    if current.contains(|c: char| !c.is_whitespace()) {
        sections.push(current);
    }
    sections
}

/// One file-delimited unit of a section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileUnit {
    pub source_file: Option<String>,
    pub body: String,
}

/// Splits a section at source-marker lines (`// File: path`). Text before
/// the first marker forms a unit with no `source_file`; marker lines stay
/// at the head of their unit body unless `retain_marker` is off.
pub fn split_file_units(section: &str, policy: &SectionPolicy) -> Vec<FileUnit> {
    let mut units: Vec<FileUnit> = Vec::new();
    let mut current = String::new();
    let mut current_file: Option<String> = None;
    for line in section.split_inclusive('\n') {
        let body = line.strip_suffix('\n').unwrap_or(line);
        let body = body.strip_suffix('\r').unwrap_or(body);
        if let Some(rest) = body.strip_prefix(policy.marker_prefix.as_str()) {
            if !current.is_empty() {
                units.push(FileUnit {
                    source_file: current_file.take(),
                    body: std::mem::take(&mut current),
                });
            }
            current_file = Some(rest.trim().to_string());
            if policy.retain_marker {
                current.push_str(line);
            }
        } else {
            current.push_str(line);
        }
    }
    if !current.is_empty() || current_file.is_some() {
        units.push(FileUnit {
            source_file: current_file,
            body: current,
        });
    }
    units
}

/// Parses every document into Samples with global contiguous indices
/// assigned in document order. Per-document parsing fans out across
/// worker threads; index assignment is a sequential pass afterwards, so
/// the output order is deterministic for any worker count.
pub fn ingest_documents(docs: &[RawDocument], policy: &SectionPolicy) -> Vec<Sample> {
    let per_doc: Vec<Vec<(Option<String>, String)>> = docs
        .par_iter()
        .map(|doc| {
            let mut units = Vec::new();
            for section in split_sections(&doc.content, policy.delimiter_char, policy.delimiter_len)
            {
                for unit in split_file_units(&section, policy) {
                    if unit.body.contains(|c: char| !c.is_whitespace()) {
                        units.push((unit.source_file, unit.body));
                    }
                }
            }
            units
        })
        .collect();

    let mut samples = Vec::new();
    let mut next_idx: u64 = 0;
    for (doc, units) in docs.iter().zip(per_doc) {
        for (source_file, body) in units {
            samples.push(Sample {
                sample_idx: next_idx,
                text: body,
                category: doc.category.clone(),
                source_file,
                origin_path: doc.path.clone(),
            });
            next_idx += 1;
        }
    }
    samples
}

/// Result of the three ordering checks on a sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderReport {
    /// First index is 0.
    pub first_ok: bool,
    /// Last index is N-1.
    pub last_ok: bool,
    /// The first `prefix_len` indices increase by exactly 1 per step.
    pub prefix_sequential_ok: bool,
    pub prefix_len: usize,
}

impl OrderReport {
    pub fn all_ok(&self) -> bool {
        self.first_ok && self.last_ok && self.prefix_sequential_ok
    }
}

pub const ORDER_PREFIX_LEN: usize = 1000;

/// Checks `sample_idx[0] == 0`, `sample_idx[N-1] == N-1`, and that the
/// first 1,000 indices are sequential. Duplicate indices are an error.
pub fn verify_order(samples: &[Sample]) -> Result<OrderReport, IngestError> {
    if samples.is_empty() {
        return Err(IngestError::EmptySampleList);
    }
    let mut seen = HashSet::with_capacity(samples.len());
    for s in samples {
        if !seen.insert(s.sample_idx) {
            return Err(IngestError::DuplicateIndex(s.sample_idx));
        }
    }
    let n = samples.len();
    let prefix_len = n.min(ORDER_PREFIX_LEN);
    let prefix_sequential_ok = samples[..prefix_len]
        .windows(2)
        .all(|w| w[1].sample_idx == w[0].sample_idx + 1);
    Ok(OrderReport {
        first_ok: samples[0].sample_idx == 0,
        last_ok: samples[n - 1].sample_idx == (n - 1) as u64,
        prefix_sequential_ok,
        prefix_len,
    })
}

/// Repair pass for a failed order check: stable sort by `sample_idx`.
pub fn repair_order(samples: &mut [Sample]) {
    samples.sort_by_key(|s| s.sample_idx);
}

pub const DONE_MARKER: &str = ".done";

/// Writes the completion marker file in `dir`.
pub fn write_done_marker(dir: &Path) -> Result<(), IngestError> {
    std::fs::write(dir.join(DONE_MARKER), b"done\n")?;
    Ok(())
}

/// Blocks until the completion marker exists in `dir`, polling at
/// `poll_interval` and logging progress every `log_every`. Returns the
/// number of polls performed after the initial check (0 when the marker
/// was already present).
pub fn await_done_marker(
    dir: &Path,
    poll_interval: Duration,
    log_every: Duration,
) -> Result<u64, IngestError> {
    assert!(poll_interval > Duration::ZERO, "poll interval must be positive");
    let marker = dir.join(DONE_MARKER);
    let started = Instant::now();
    let mut last_log = Instant::now();
    let mut polls: u64 = 0;
    loop {
        match std::fs::metadata(&marker) {
            Ok(_) => return Ok(polls),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(IngestError::Io(e)),
        }
        if last_log.elapsed() >= log_every {
            log::info!(
                "waiting for {} ({}s elapsed)",
                marker.display(),
                started.elapsed().as_secs()
            );
            last_log = Instant::now();
        }
        std::thread::sleep(poll_interval);
        polls += 1;
    }
}

/// Sidecar manifest mapping document paths to category labels.
/// Line format: `path<TAB>category`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryManifest {
    map: BTreeMap<PathBuf, String>,
}

impl CategoryManifest {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let (path, category) = match (parts.next(), parts.next()) {
                (Some(p), Some(c)) if !p.is_empty() && !c.trim().is_empty() => (p, c.trim()),
                _ => return Err(IngestError::BadManifestLine { line: i + 1 }),
            };
            map.insert(PathBuf::from(path), category.to_string());
        }
        Ok(Self { map })
    }

    pub fn from_file(path: &Path) -> Result<Self, IngestError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn category_for(&self, path: &Path) -> Option<&str> {
        self.map.get(path).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Fallback category when no manifest entry applies: the parent directory
/// name, or "general" at the root.
pub fn category_from_path(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .map(|s| s.to_string())
        .unwrap_or_else(|| "general".to_string())
}
