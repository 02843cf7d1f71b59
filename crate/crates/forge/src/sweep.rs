//! Sweep analytics over per-run summaries: loss reduction, marginal effects
//! per hyperparameter axis, gradient-norm rankings, and compute totals.
//!
//! A marginal effect is the mean final loss at each level of one axis,
//! averaged over all other axes. The signed delta is taken between the
//! first and last level in level order (numeric when every level parses as
//! a number, lexicographic otherwise), computed on the 3-decimal rounded
//! means so it matches what a reader derives from the reported table; raw
//! means are carried alongside.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("run `{run}` has no level for axis `{axis}`")]
    MissingAxis { run: String, axis: String },
    #[error("no runs supplied")]
    EmptyRuns,
    #[error("explicit level order {order:?} does not cover observed levels {observed:?}")]
    LevelOrderMismatch {
        order: Vec<String>,
        observed: Vec<String>,
    },
}

/// One sweep run's summary plus its position on the sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub name: String,
    pub config: BTreeMap<String, String>,
    pub init_loss: f64,
    pub final_loss: f64,
    pub min_loss: f64,
    pub peak_grad: f64,
    pub mean_grad: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpu_hours: Option<f64>,
}

/// Mean final loss at one level of an axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMean {
    pub level: String,
    pub mean_final_loss: f64,
    pub mean_rounded: f64,
    pub runs: u64,
}

/// Marginal effect of one axis. `delta` is signed: first level minus last
/// level in level order, on the rounded means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub axis: String,
    pub levels: Vec<LevelMean>,
    pub delta: f64,
}

/// Rounds to 3 decimals, halves away from zero.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn level_sort(levels: &mut [String]) {
    let numeric: Option<Vec<f64>> = levels
        .iter()
        .map(|l| l.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    if let Some(values) = numeric {
        let mut keyed: Vec<(f64, String)> = values.into_iter().zip(levels.iter().cloned()).collect();
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (slot, (_, level)) in levels.iter_mut().zip(keyed) {
            *slot = level;
        }
    } else {
        levels.sort();
    }
}

fn effect_with_order(
    runs: &[SweepRun],
    axis: &str,
    order: Vec<String>,
) -> Result<MarginalEffect, SweepError> {
    let mut sums: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    for run in runs {
        let level = run.config.get(axis).ok_or_else(|| SweepError::MissingAxis {
            run: run.name.clone(),
            axis: axis.to_string(),
        })?;
        let slot = sums.entry(level).or_insert((0.0, 0));
        slot.0 += run.final_loss;
        slot.1 += 1;
    }
    let observed: Vec<String> = sums.keys().map(|s| s.to_string()).collect();
    let mut ordered = order.clone();
    ordered.sort();
    if ordered != observed {
        return Err(SweepError::LevelOrderMismatch {
            order,
            observed,
        });
    }
    let levels: Vec<LevelMean> = order
        .iter()
        .map(|level| {
            let (sum, n) = sums[level.as_str()];
            let mean = sum / n as f64;
            LevelMean {
                level: level.clone(),
                mean_final_loss: mean,
                mean_rounded: round3(mean),
                runs: n,
            }
        })
        .collect();
    let delta = levels.first().map(|l| l.mean_rounded).unwrap_or(0.0)
        - levels.last().map(|l| l.mean_rounded).unwrap_or(0.0);
    Ok(MarginalEffect {
        axis: axis.to_string(),
        levels,
        delta,
    })
}

/// Marginal effect of `axis` with automatic level ordering.
pub fn marginal_effects(runs: &[SweepRun], axis: &str) -> Result<MarginalEffect, SweepError> {
    if runs.is_empty() {
        return Err(SweepError::EmptyRuns);
    }
    let mut levels: Vec<String> = Vec::new();
    for run in runs {
        let level = run.config.get(axis).ok_or_else(|| SweepError::MissingAxis {
            run: run.name.clone(),
            axis: axis.to_string(),
        })?;
        if !levels.contains(level) {
            levels.push(level.clone());
        }
    }
    level_sort(&mut levels);
    effect_with_order(runs, axis, levels)
}

/// Marginal effect with a caller-supplied level order, which must cover
/// exactly the observed levels.
pub fn marginal_effects_ordered(
    runs: &[SweepRun],
    axis: &str,
    order: &[String],
) -> Result<MarginalEffect, SweepError> {
    if runs.is_empty() {
        return Err(SweepError::EmptyRuns);
    }
    effect_with_order(runs, axis, order.to_vec())
}

/// Loss reduction in percent relative to the run's initial loss.
pub fn reduction(run: &SweepRun) -> f64 {
    (run.init_loss - run.final_loss) / run.init_loss * 100.0
}

/// Runs sorted by peak gradient norm, descending. The sort is stable, so
/// equal peaks keep their input order.
pub fn grad_stats(runs: &[SweepRun]) -> Vec<&SweepRun> {
    let mut sorted: Vec<&SweepRun> = runs.iter().collect();
    sorted.sort_by(|a, b| b.peak_grad.partial_cmp(&a.peak_grad).unwrap());
    sorted
}

/// Names appearing more than once, sorted. A raw results table can carry a
/// duplicated row; callers surface these instead of silently merging.
pub fn duplicate_names(runs: &[SweepRun]) -> Vec<String> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for run in runs {
        *counts.entry(&run.name).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n > 1)
        .map(|(name, _)| name.to_string())
        .collect()
}

/// Sum of per-run GPU-hours; runs without a figure contribute nothing.
pub fn total_gpu_hours(runs: &[SweepRun]) -> f64 {
    runs.iter().filter_map(|r| r.gpu_hours).sum()
}
