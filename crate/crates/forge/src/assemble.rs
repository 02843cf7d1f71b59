//! Final mixture assembly: budgeted truncation with boundary-aware cuts,
//! end-of-text termination, order-preserving greedy packing, and corpus
//! statistics.
//!
//! Packing is greedy first-fit over the ordered stream, never a bin
//! packer: order preservation is a contract, not an optimization target.
//! Each packed member costs its token count plus one EOS separator; a
//! sample occupying the full window elides the separator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Sample;
use crate::tokencount::{CountError, TokenCounter};

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("sample {sample_idx} has {tokens} tokens, above the {window}-token window")]
    OversizeSample {
        sample_idx: u64,
        tokens: u64,
        window: u64,
    },
    #[error("sample indices must increase: {next} after {prev}")]
    NonMonotonicIndex { prev: u64, next: u64 },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Count(#[from] CountError),
}

/// Truncation and termination policy for one assembled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyPolicy {
    pub max_tokens: u64,
    pub counter: TokenCounter,
    pub eot_token: String,
    /// Cut-point preference order; the first character with any occurrence
    /// at or before the budget decides the cut.
    pub boundary_chars: Vec<char>,
}

impl Default for AssemblyPolicy {
    fn default() -> Self {
        Self {
            max_tokens: 2048,
            counter: TokenCounter::assembly_default(),
            eot_token: "<|endoftext|>".to_string(),
            boundary_chars: vec!['\n', '.', ';'],
        }
    }
}

/// One sample after truncation. `kept` carries the trailing end-of-text
/// literal; `body_tokens` counts the text before it. The packed cost of
/// the sample is `body_tokens + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncated {
    pub kept: String,
    pub body_tokens: u64,
    pub overflow: Option<String>,
}

/// Largest char-prefix of `text` whose token count stays within `budget`.
/// Valid for any counter that is monotone under prefix extension.
fn max_prefix_chars(
    text: &str,
    char_offsets: &[usize],
    counter: &TokenCounter,
    budget: u64,
) -> Result<usize, CountError> {
    let total = char_offsets.len() - 1;
    let mut lo = 0;
    let mut hi = total;
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if counter.count_text(&text[..char_offsets[mid]])? <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

/// Truncates `text` to the token budget, reserving one slot for the
/// end-of-text token appended to the kept text. The cut lands after the
/// last boundary character (by preference order) at or before the budget,
/// or at the raw budget position when no boundary exists. Overflow text
/// is returned, not re-queued.
pub fn truncate_sample(text: &str, policy: &AssemblyPolicy) -> Result<Truncated, AssembleError> {
    let budget = policy.max_tokens.saturating_sub(1);
    let body_tokens = policy.counter.count_text(text)?;
    if body_tokens <= budget {
        return Ok(Truncated {
            kept: format!("{text}{}", policy.eot_token),
            body_tokens,
            overflow: None,
        });
    }

    // char index -> byte offset, one extra entry for the end
    let mut char_offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    char_offsets.push(text.len());
    let hard_cut = max_prefix_chars(text, &char_offsets, &policy.counter, budget)?;

    // one pass recording, per boundary kind, the last cut position (the
    // index just past the boundary char) inside the budget
    let mut last_pos: Vec<Option<usize>> = vec![None; policy.boundary_chars.len()];
    for (i, c) in text.chars().take(hard_cut).enumerate() {
        if let Some(k) = policy.boundary_chars.iter().position(|&b| b == c) {
            last_pos[k] = Some(i + 1);
        }
    }
    let cut = last_pos.iter().flatten().copied().next().unwrap_or(hard_cut);

    let cut_byte = char_offsets[cut];
    let body = &text[..cut_byte];
    let body_tokens = policy.counter.count_text(body)?;
    Ok(Truncated {
        kept: format!("{body}{}", policy.eot_token),
        body_tokens,
        overflow: Some(text[cut_byte..].to_string()),
    })
}

/// One fixed-size training window assembled from consecutive samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedSequence {
    pub window_tokens: u64,
    pub member_sample_idxs: Vec<u64>,
    pub used_tokens: u64,
    pub fill_fraction: f64,
}

impl PackedSequence {
    fn new(window_tokens: u64, member_sample_idxs: Vec<u64>, used_tokens: u64) -> Self {
        Self {
            window_tokens,
            member_sample_idxs,
            used_tokens,
            fill_fraction: used_tokens as f64 / window_tokens as f64,
        }
    }
}

/// Greedy in-order packing of `(sample_idx, body_tokens)` pairs into
/// fixed windows. Each member costs its tokens plus one EOS separator;
/// the next sample opens a new window when it no longer fits. Indices
/// must increase strictly; a sample above the window size is an upstream
/// pipeline bug, reported as an error.
pub fn pack(
    members: impl IntoIterator<Item = (u64, u64)>,
    window_tokens: u64,
) -> Result<Vec<PackedSequence>, AssembleError> {
    assert!(window_tokens >= 1, "window must hold at least one token");
    let mut windows = Vec::new();
    let mut current: Vec<u64> = Vec::new();
    let mut used: u64 = 0;
    let mut prev_idx: Option<u64> = None;
    for (idx, tokens) in members {
        if let Some(prev) = prev_idx {
            if idx <= prev {
                return Err(AssembleError::NonMonotonicIndex { prev, next: idx });
            }
        }
        prev_idx = Some(idx);
        if tokens > window_tokens {
            return Err(AssembleError::OversizeSample {
                sample_idx: idx,
                tokens,
                window: window_tokens,
            });
        }
        let cost = tokens + 1;
        if !current.is_empty() && used + cost <= window_tokens {
            current.push(idx);
            used += cost;
        } else {
            if !current.is_empty() {
                windows.push(PackedSequence::new(
                    window_tokens,
                    std::mem::take(&mut current),
                    used,
                ));
            }
            current.push(idx);
            // a full-window sample elides its separator
            used = cost.min(window_tokens);
        }
    }
    if !current.is_empty() {
        windows.push(PackedSequence::new(window_tokens, current, used));
    }
    Ok(windows)
}

/// Token-weighted aggregate fill over all windows.
pub fn aggregate_fill(windows: &[PackedSequence]) -> f64 {
    let used: u64 = windows.iter().map(|w| w.used_tokens).sum();
    let capacity: u64 = windows.iter().map(|w| w.window_tokens).sum();
    if capacity == 0 {
        0.0
    } else {
        used as f64 / capacity as f64
    }
}

/// Corpus summary over per-sample token counts and packed windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sample_count: u64,
    pub total_tokens: u64,
    pub mean_sample_tokens: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub packing_fill_rate: Option<f64>,
}

impl CorpusStats {
    pub fn from_counts(counts: &[u64]) -> Result<Self, AssembleError> {
        if counts.is_empty() {
            return Err(AssembleError::EmptyCorpus);
        }
        let total: u64 = counts.iter().sum();
        Ok(Self {
            sample_count: counts.len() as u64,
            total_tokens: total,
            mean_sample_tokens: total as f64 / counts.len() as f64,
            packing_fill_rate: None,
        })
    }

    pub fn with_packing(mut self, windows: &[PackedSequence]) -> Self {
        self.packing_fill_rate = Some(aggregate_fill(windows));
        self
    }
}

/// Result of running truncation, reindexing, and packing over a sample
/// stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembleOutcome {
    /// Truncated, end-of-text-terminated samples, reindexed from 0.
    pub samples: Vec<Sample>,
    /// Body token count per sample (the packed cost is this plus 1).
    pub body_tokens: Vec<u64>,
    pub windows: Vec<PackedSequence>,
    pub stats: CorpusStats,
    pub truncated_count: u64,
    pub overflow_chars: u64,
}

/// Full assembly: truncate every sample (in parallel, order preserved),
/// reassign contiguous indices in stream order, and pack.
pub fn assemble(
    samples: Vec<Sample>,
    policy: &AssemblyPolicy,
    window_tokens: u64,
) -> Result<AssembleOutcome, AssembleError> {
    if samples.is_empty() {
        return Err(AssembleError::EmptyCorpus);
    }
    let truncated: Vec<Truncated> = samples
        .par_iter()
        .map(|s| truncate_sample(&s.text, policy))
        .collect::<Result<_, _>>()?;

    let mut out_samples = Vec::with_capacity(samples.len());
    let mut body_tokens = Vec::with_capacity(samples.len());
    let mut truncated_count = 0;
    let mut overflow_chars = 0;
    for (new_idx, (mut sample, t)) in samples.into_iter().zip(truncated).enumerate() {
        sample.sample_idx = new_idx as u64;
        sample.text = t.kept;
        if let Some(ov) = &t.overflow {
            truncated_count += 1;
            overflow_chars += ov.chars().count() as u64;
        }
        body_tokens.push(t.body_tokens);
        out_samples.push(sample);
    }

    let windows = pack(
        out_samples
            .iter()
            .map(|s| s.sample_idx)
            .zip(body_tokens.iter().copied()),
        window_tokens,
    )?;
    let stats = CorpusStats::from_counts(&body_tokens)?.with_packing(&windows);
    Ok(AssembleOutcome {
        samples: out_samples,
        body_tokens,
        windows,
        stats,
        truncated_count,
        overflow_chars,
    })
}

/// Flat-text emission for one window: member texts joined by the
/// end-of-text literal. Members already end with their own terminator,
/// so joins carry a doubled end-of-text; consumers that dislike this
/// should strip one side.
pub fn emit_window_text(member_texts: &[&str], eot_token: &str) -> String {
    member_texts.join(eot_token)
}
