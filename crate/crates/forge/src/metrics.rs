//! Model-agnostic evaluation over per-token output records: perplexity with
//! category weighting and relative deltas, teacher-forced split points,
//! top-k accuracy, BLEU-4, and generative token accuracy with per-category
//! winner tables.
//!
//! Perplexity is `exp(-(1/N) * sum log P(x_i | x_<i))`; BLEU-4 is
//! `BP * exp(sum_n w_n log p_n)` with clipped modified precisions and
//! `BP = min(1, exp(1 - L_ref/L_cand))`. The engine never runs a model; it
//! consumes records produced by any inference stack, which keeps every
//! number here bit-reproducible.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty evaluation stream")]
    EmptyEval,
    #[error("sample of {len} tokens is too short to split")]
    TooShort { len: usize },
    #[error("top-{k} requested but a record carries only {have} candidates")]
    KTooLarge { k: usize, have: usize },
    #[error("zero token weight for a category")]
    ZeroWeight,
    #[error("model `{model}` has no score for category `{category}`")]
    MissingCoverage { model: String, category: String },
    #[error("record `{sample_id}`: {reason}")]
    BadRecord { sample_id: String, reason: String },
}

/// One scored token position. `category` groups records for per-category
/// reports; absent means the general pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub sample_id: String,
    pub position: u64,
    pub ref_token_id: u64,
    pub logprob_of_ref: f64,
    pub topk_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Per-category aggregate over token records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: String,
    pub token_count: u64,
    pub ppl: f64,
    pub top1: f64,
    pub top5: f64,
    pub mean_loss: f64,
}

/// One generation outcome: decoded reference and model tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenPair {
    pub sample_id: String,
    pub category: String,
    pub reference_tokens: Vec<String>,
    pub generated_tokens: Vec<String>,
}

/// Mean negative log-likelihood over the records.
pub fn mean_nll<'a, I>(records: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = &'a TokenRecord>,
{
    let mut sum = 0.0;
    let mut n = 0u64;
    for record in records {
        sum -= record.logprob_of_ref;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::EmptyEval);
    }
    Ok(sum / n as f64)
}

/// Perplexity: exponentiated mean negative log-likelihood. Stays in log
/// space until the final exp, so long streams never underflow.
pub fn perplexity<'a, I>(records: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = &'a TokenRecord>,
{
    Ok(mean_nll(records)?.exp())
}

/// How per-category perplexities combine into an overall figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Token-weighted arithmetic mean of the category perplexities.
    Arithmetic,
    /// Exp of the token-weighted mean NLL (equivalently, the weighted
    /// geometric mean of the category perplexities).
    Pooled,
}

pub fn weighted_ppl(per_category: &[(f64, u64)], mode: WeightMode) -> Result<f64, MetricsError> {
    if per_category.is_empty() {
        return Err(MetricsError::EmptyEval);
    }
    if per_category.iter().any(|&(_, w)| w == 0) {
        return Err(MetricsError::ZeroWeight);
    }
    let total: u64 = per_category.iter().map(|&(_, w)| w).sum();
    let value = match mode {
        WeightMode::Arithmetic => {
            per_category
                .iter()
                .map(|&(ppl, w)| ppl * w as f64)
                .sum::<f64>()
                / total as f64
        }
        WeightMode::Pooled => (per_category
            .iter()
            .map(|&(ppl, w)| ppl.ln() * w as f64)
            .sum::<f64>()
            / total as f64)
            .exp(),
    };
    Ok(value)
}

/// Relative perplexity reduction in percent: `(base - adapted)/base * 100`.
/// Requires `base > 0`.
pub fn delta_ppl(base: f64, adapted: f64) -> f64 {
    (base - adapted) / base * 100.0
}

pub const TEACHER_FORCED_SPLIT: f64 = 0.75;

/// Splits a token list for teacher-forced completion: prefix length is
/// `floor(frac * len)` clamped so both sides stay non-empty.
pub fn split_teacher_forced<T>(tokens: &[T], frac: f64) -> Result<(&[T], &[T]), MetricsError> {
    let len = tokens.len();
    if len < 2 {
        return Err(MetricsError::TooShort { len });
    }
    let cut = ((frac * len as f64).floor() as usize).clamp(1, len - 1);
    Ok(tokens.split_at(cut))
}

/// Fraction of records whose reference token appears among the first `k`
/// candidates.
pub fn topk_accuracy(records: &[TokenRecord], k: usize) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyEval);
    }
    for record in records {
        if record.topk_ids.len() < k {
            return Err(MetricsError::KTooLarge {
                k,
                have: record.topk_ids.len(),
            });
        }
    }
    let hits = records
        .iter()
        .filter(|r| r.topk_ids[..k].contains(&r.ref_token_id))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Precision smoothing for BLEU-4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Any zero precision zeroes the score; matches the bare formula.
    Strict,
    /// Add-one on every used order: `(matches + 1)/(total + 1)`.
    AddOne,
}

/// Brevity penalty: `min(1, exp(1 - len_ref/len_cand))`.
pub fn brevity_penalty(len_ref: usize, len_cand: usize) -> f64 {
    (1.0 - len_ref as f64 / len_cand as f64).exp().min(1.0)
}

/// BLEU-4 with clipped modified n-gram precisions. Orders carry weight
/// `1/|used|` where `used` are the orders for which the candidate has at
/// least one n-gram, so short-but-exact candidates still score 1.0.
pub fn bleu4<T: Eq + Hash>(candidate: &[T], reference: &[T], smoothing: Smoothing) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut used = 0u32;
    for n in 1..=4usize {
        if candidate.len() < n {
            break;
        }
        let total = (candidate.len() - n + 1) as u64;
        let mut ref_counts: HashMap<&[T], u64> = HashMap::new();
        if reference.len() >= n {
            for gram in reference.windows(n) {
                *ref_counts.entry(gram).or_insert(0) += 1;
            }
        }
        let mut cand_counts: HashMap<&[T], u64> = HashMap::new();
        for gram in candidate.windows(n) {
            *cand_counts.entry(gram).or_insert(0) += 1;
        }
        let matches: u64 = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let (num, den) = match smoothing {
            Smoothing::Strict => (matches as f64, total as f64),
            Smoothing::AddOne => (matches as f64 + 1.0, total as f64 + 1.0),
        };
        if num == 0.0 {
            return 0.0;
        }
        log_sum += (num / den).ln();
        used += 1;
    }
    brevity_penalty(reference.len(), candidate.len()) * (log_sum / used as f64).exp()
}

/// Position-aligned exact-match rate, normalized by reference length.
/// An empty generation scores 0; positions past the shorter sequence never
/// match.
pub fn gen_token_accuracy(pair: &GenPair) -> f64 {
    let len_ref = pair.reference_tokens.len();
    if len_ref == 0 {
        return 0.0;
    }
    let matches = pair
        .reference_tokens
        .iter()
        .zip(&pair.generated_tokens)
        .filter(|(r, g)| r == g)
        .count();
    matches as f64 / len_ref as f64
}

/// Mean positional accuracy for one category of generation pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub category: String,
    pub pair_count: u64,
    pub mean_accuracy: f64,
}

/// Groups generation pairs by category and averages their positional
/// accuracy. One row per category, sorted; one model's column of the
/// cross-model accuracy matrix.
pub fn aggregate_gen_accuracy(pairs: &[GenPair]) -> Result<Vec<GenReport>, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyEval);
    }
    let mut sums: BTreeMap<&str, (u64, f64)> = BTreeMap::new();
    for pair in pairs {
        let entry = sums.entry(&pair.category).or_default();
        entry.0 += 1;
        entry.1 += gen_token_accuracy(pair);
    }
    Ok(sums
        .into_iter()
        .map(|(category, (pair_count, total))| GenReport {
            category: category.to_string(),
            pair_count,
            mean_accuracy: total / pair_count as f64,
        })
        .collect())
}

/// Per-category argmax over model scores. Exact ties report every tied
/// model, sorted by name. Every model must cover every category.
pub fn winner_table(
    scores: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<BTreeMap<String, Vec<String>>, MetricsError> {
    let categories: std::collections::BTreeSet<&String> =
        scores.values().flat_map(|per_cat| per_cat.keys()).collect();
    for (model, per_cat) in scores {
        for category in &categories {
            if !per_cat.contains_key(*category) {
                return Err(MetricsError::MissingCoverage {
                    model: model.clone(),
                    category: (*category).clone(),
                });
            }
        }
    }
    let mut table = BTreeMap::new();
    for category in categories {
        let best = scores
            .values()
            .map(|per_cat| per_cat[category])
            .fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<String> = scores
            .iter()
            .filter(|(_, per_cat)| per_cat[category] == best)
            .map(|(model, _)| model.clone())
            .collect();
        table.insert(category.clone(), winners);
    }
    Ok(table)
}

fn validate_record(record: &TokenRecord) -> Result<(), MetricsError> {
    let fail = |reason: &str| MetricsError::BadRecord {
        sample_id: record.sample_id.clone(),
        reason: reason.to_string(),
    };
    if !record.logprob_of_ref.is_finite() || record.logprob_of_ref > 0.0 {
        return Err(fail("logprob_of_ref must be finite and <= 0"));
    }
    if record.topk_ids.len() < 5 {
        return Err(fail("topk_ids must carry at least 5 candidates"));
    }
    for (i, id) in record.topk_ids.iter().enumerate() {
        if record.topk_ids[..i].contains(id) {
            return Err(fail("topk_ids contains duplicates"));
        }
    }
    Ok(())
}

const DEFAULT_CATEGORY: &str = "general";

/// Groups records by category and reports each one. Categories evaluate
/// concurrently; the output is sorted by category name.
pub fn evaluate_categories(records: &[TokenRecord]) -> Result<Vec<CategoryReport>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyEval);
    }
    for record in records {
        validate_record(record)?;
    }
    let mut groups: BTreeMap<&str, Vec<&TokenRecord>> = BTreeMap::new();
    for record in records {
        groups
            .entry(record.category.as_deref().unwrap_or(DEFAULT_CATEGORY))
            .or_default()
            .push(record);
    }
    groups
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(category, members)| {
            let owned: Vec<TokenRecord> = members.iter().map(|&r| r.clone()).collect();
            let mean_loss = mean_nll(owned.iter())?;
            Ok(CategoryReport {
                category: category.to_string(),
                token_count: owned.len() as u64,
                ppl: mean_loss.exp(),
                top1: topk_accuracy(&owned, 1)?,
                top5: topk_accuracy(&owned, 5)?,
                mean_loss,
            })
        })
        .collect()
}
