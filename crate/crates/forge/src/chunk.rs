//! Oversize-sample splitting at code-aware boundaries.
//!
//! Split points are chosen from a three-level preference hierarchy: file
//! markers, then function boundaries, then statement boundaries. Within a
//! window the boundary closest to `max_chars` wins, which maximizes chunk
//! size for downstream packing. A window with no usable boundary is cut
//! at exactly `max_chars` and flagged as a hard split.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("invalid split policy: {0}")]
    InvalidPolicy(String),
}

/// The three boundary kinds, in default preference order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Start of a line carrying the source-file marker prefix.
    FileMarker,
    /// After a lone `}` at column 0, or at a function-definition-shaped line.
    FunctionBoundary,
    /// After `;` followed by a newline, or after a blank-line pair.
    StatementBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPolicy {
    pub max_chars: usize,
    pub min_chars: usize,
    /// Boundary kinds tried in order; the first kind with any candidate in
    /// the window decides the split.
    pub hierarchy: Vec<BoundaryKind>,
    pub marker_prefix: String,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            max_chars: 7500,
            min_chars: 50,
            hierarchy: vec![
                BoundaryKind::FileMarker,
                BoundaryKind::FunctionBoundary,
                BoundaryKind::StatementBoundary,
            ],
            marker_prefix: "// File:".to_string(),
        }
    }
}

impl SplitPolicy {
    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.min_chars >= self.max_chars {
            return Err(ChunkError::InvalidPolicy(format!(
                "min_chars ({}) must be below max_chars ({})",
                self.min_chars, self.max_chars
            )));
        }
        if self.hierarchy.is_empty() {
            return Err(ChunkError::InvalidPolicy("empty boundary hierarchy".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for kind in &self.hierarchy {
            if !seen.insert(kind) {
                return Err(ChunkError::InvalidPolicy(format!(
                    "duplicate boundary kind {kind:?} in hierarchy"
                )));
            }
        }
        Ok(())
    }
}

/// Heuristic function-definition shape: leading identifier words with
/// optional pointer stars, an argument list, and an optional opening brace.
/// Deliberately not a C parser; macro-heavy embedded code defeats parsers.
static FN_SHAPE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^[A-Za-z_][A-Za-z0-9_]*(?:[ \t*]+[A-Za-z_*][A-Za-z0-9_*]*)*[ \t]*\([^;{}()]*\)[ \t]*\{?[ \t\r]*$",
    )
    .expect("static regex")
});

/// Control-flow keywords that match the function shape but are not
/// definitions.
const NON_FUNCTION_KEYWORDS: [&str; 6] = ["if", "else", "for", "while", "switch", "return"];

fn is_function_shaped(line: &str) -> bool {
    if !FN_SHAPE.is_match(line) {
        return false;
    }
    let first_word: String = line
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    !NON_FUNCTION_KEYWORDS.contains(&first_word.as_str())
}

/// Byte offsets of every boundary of `kind`, sorted ascending, deduplicated.
/// Offsets always fall on UTF-8 character starts (line starts or positions
/// just past a newline); an offset equal to `text.len()` is reported but
/// never usable as a split point.
pub fn detect_boundaries(text: &str, kind: BoundaryKind, policy: &SplitPolicy) -> Vec<usize> {
    let mut offsets = Vec::new();
    match kind {
        BoundaryKind::FileMarker => {
            let mut line_start = 0;
            for line in text.split_inclusive('\n') {
                if line.starts_with(policy.marker_prefix.as_str()) {
                    offsets.push(line_start);
                }
                line_start += line.len();
            }
        }
        BoundaryKind::FunctionBoundary => {
            let mut line_start = 0;
            for line in text.split_inclusive('\n') {
                let body = line.strip_suffix('\n').unwrap_or(line);
                if body.trim_end() == "}" {
                    offsets.push(line_start + line.len());
                }
                if is_function_shaped(body) {
                    offsets.push(line_start);
                }
                line_start += line.len();
            }
        }
        BoundaryKind::StatementBoundary => {
            let bytes = text.as_bytes();
            for i in 0..bytes.len() {
                if bytes[i] == b';' {
                    if bytes.get(i + 1) == Some(&b'\n') {
                        offsets.push(i + 2);
                    } else if bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') {
                        offsets.push(i + 3);
                    }
                }
                if bytes[i] == b'\n' && bytes.get(i + 1) == Some(&b'\n') {
                    offsets.push(i + 2);
                }
            }
        }
    }
    offsets.sort_unstable();
    offsets.dedup();
    offsets
}

/// Result of splitting one oversized text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitOutcome {
    pub chunks: Vec<String>,
    /// Windows cut at the raw character limit because no boundary existed.
    pub hard_split_count: usize,
    /// Sub-`min_chars` chunks that could not merge forward and were dropped.
    pub dropped_chunks: usize,
    pub dropped_chars: usize,
}

impl SplitOutcome {
    pub fn total_chars(&self) -> usize {
        self.chunks.iter().map(|c| c.chars().count()).sum::<usize>() + self.dropped_chars
    }
}

/// Splits `text` into chunks of at most `max_chars` characters, cutting at
/// the highest-priority boundary available in each window. Chunks shorter
/// than `min_chars` merge forward into the next chunk when the merge stays
/// within `max_chars`, and are dropped (with exact accounting) otherwise.
pub fn split_large(text: &str, policy: &SplitPolicy) -> Result<SplitOutcome, ChunkError> {
    policy.validate()?;
    if text.is_empty() {
        return Ok(SplitOutcome::default());
    }
    let total_chars = text.chars().count();
    if total_chars <= policy.max_chars {
        return Ok(SplitOutcome {
            chunks: vec![text.to_string()],
            ..SplitOutcome::default()
        });
    }

    let boundary_sets: Vec<Vec<usize>> = policy
        .hierarchy
        .iter()
        .map(|kind| detect_boundaries(text, *kind, policy))
        .collect();

    let mut raw: Vec<&str> = Vec::new();
    let mut hard_split_count = 0;
    let mut start = 0usize;
    let mut remaining_chars = total_chars;
    while remaining_chars > policy.max_chars {
        // byte offset of the character one past the window, always < len
        // because more than max_chars characters remain
        let window_end = start
            + text[start..]
                .char_indices()
                .nth(policy.max_chars)
                .expect("window shorter than remaining text")
                .0;
        let mut cut = None;
        for set in &boundary_sets {
            // largest boundary in (start, window_end]
            let hi = set.partition_point(|&b| b <= window_end);
            let lo = set.partition_point(|&b| b <= start);
            if hi > lo {
                cut = Some(set[hi - 1]);
                break;
            }
        }
        let cut = cut.unwrap_or_else(|| {
            hard_split_count += 1;
            window_end
        });
        let chunk = &text[start..cut];
        remaining_chars -= chunk.chars().count();
        raw.push(chunk);
        start = cut;
    }
    raw.push(&text[start..]);

    // forward-merge pass for sub-min chunks
    let mut chunks: Vec<String> = Vec::new();
    let mut dropped_chunks = 0;
    let mut dropped_chars = 0;
    let mut held = String::new();
    let mut held_chars = 0usize;
    for piece in raw {
        let mut chunk_chars = piece.chars().count();
        let mut chunk = piece.to_string();
        if held_chars > 0 {
            if held_chars + chunk_chars <= policy.max_chars {
                chunk_chars += held_chars;
                chunk = std::mem::take(&mut held) + &chunk;
            } else {
                dropped_chunks += 1;
                dropped_chars += held_chars;
                held.clear();
            }
            held_chars = 0;
        }
        if chunk_chars >= policy.min_chars {
            chunks.push(chunk);
        } else {
            held = chunk;
            held_chars = chunk_chars;
        }
    }
    if held_chars > 0 {
        dropped_chunks += 1;
        dropped_chars += held_chars;
    }

    Ok(SplitOutcome {
        chunks,
        hard_split_count,
        dropped_chunks,
        dropped_chars,
    })
}
