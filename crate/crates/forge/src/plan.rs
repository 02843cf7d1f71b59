//! Closed-form run planning: adapter scaling, trainable-parameter counts,
//! batch and token arithmetic, the warmup-plus-cosine schedule, the
//! rank-scaled stable-LR rule, and factorial sweep grids.
//!
//! The schedule is
//!
//! ```text
//! eta(t) = eta_max * t / t_w                                      t <= t_w
//! eta(t) = eta_min + 0.5*(eta_max - eta_min)*(1 + cos(pi*(t - t_w)/(T - t_w)))
//! ```
//!
//! with `t_w = warmup_frac * T`. The embedding parameter group follows the
//! same curve with its peak scaled by `embed_lr_ratio`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("architecture line {line}: {reason}")]
    BadArchLine { line: usize, reason: String },
    #[error("no dimensions for targeted module `{0}`")]
    MissingModuleDims(String),
    #[error("invalid plan: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Low-rank adapter settings. `target_modules` empty means every module in
/// the architecture descriptor is adapted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: u64,
    pub alpha: f64,
    pub dropout: f64,
    pub rslora: bool,
    #[serde(default)]
    pub target_modules: BTreeSet<String>,
}

impl LoraConfig {
    /// Rank-scaled preset: `alpha = 2r`, dropout 0.05, rank-stabilized
    /// scaling on, all modules targeted.
    pub fn rank_scaled(rank: u64) -> Self {
        LoraConfig {
            rank,
            alpha: 2.0 * rank as f64,
            dropout: 0.05,
            rslora: true,
            target_modules: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.rank == 0 {
            return Err(PlanError::InvalidConfig("rank must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(PlanError::InvalidConfig("alpha must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(PlanError::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Effective learning rate after adapter scaling: `eta * alpha / r` for
/// standard scaling, `eta * alpha / sqrt(r)` when rank-stabilized.
pub fn effective_lr(eta: f64, cfg: &LoraConfig) -> f64 {
    let r = cfg.rank as f64;
    if cfg.rslora {
        eta * cfg.alpha / r.sqrt()
    } else {
        eta * cfg.alpha / r
    }
}

/// One adapted module shape: `count` layers each mapping `d_in -> d_out`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDescriptor {
    pub name: String,
    pub d_in: u64,
    pub d_out: u64,
    pub count: u64,
}

/// Parses an architecture descriptor: one `name d_in d_out count` record per
/// line, `#` comments and blank lines ignored.
pub fn parse_architecture(text: &str) -> Result<Vec<ModuleDescriptor>, PlanError> {
    let mut modules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(PlanError::BadArchLine {
                line,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let dim = |s: &str, what: &str| -> Result<u64, PlanError> {
            let v: u64 = s.parse().map_err(|_| PlanError::BadArchLine {
                line,
                reason: format!("bad {what} `{s}`"),
            })?;
            if v == 0 {
                return Err(PlanError::BadArchLine {
                    line,
                    reason: format!("{what} must be positive"),
                });
            }
            Ok(v)
        };
        modules.push(ModuleDescriptor {
            name: fields[0].to_string(),
            d_in: dim(fields[1], "d_in")?,
            d_out: dim(fields[2], "d_out")?,
            count: dim(fields[3], "count")?,
        });
    }
    Ok(modules)
}

pub fn read_architecture(path: &Path) -> Result<Vec<ModuleDescriptor>, PlanError> {
    parse_architecture(&std::fs::read_to_string(path)?)
}

/// Adapter parameter count: `r * sum over targeted modules of
/// count * (d_in + d_out)`, one rank-r pair per module instance.
pub fn trainable_params(
    cfg: &LoraConfig,
    modules: &[ModuleDescriptor],
) -> Result<u64, PlanError> {
    cfg.validate()?;
    let targeted: Vec<&ModuleDescriptor> = if cfg.target_modules.is_empty() {
        modules.iter().collect()
    } else {
        cfg.target_modules
            .iter()
            .map(|name| {
                modules
                    .iter()
                    .find(|m| &m.name == name)
                    .ok_or_else(|| PlanError::MissingModuleDims(name.clone()))
            })
            .collect::<Result<_, _>>()?
    };
    let per_rank: u64 = targeted.iter().map(|m| m.count * (m.d_in + m.d_out)).sum();
    Ok(cfg.rank * per_rank)
}

/// Optimizer parameter group. Embedding-tied modules train at a reduced
/// peak learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Main,
    Embedding,
}

/// Classifies a parameter name into its optimizer group.
pub fn param_group(name: &str) -> ParamGroup {
    if name.contains("embed_tokens") || name.contains("lm_head") {
        ParamGroup::Embedding
    } else {
        ParamGroup::Main
    }
}

/// Full training-run plan. Defaults mirror the production configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub per_device_batch: u64,
    pub grad_accum: u64,
    pub n_gpu: u64,
    pub seq_len: u64,
    pub main_lr: f64,
    pub embed_lr_ratio: f64,
    pub min_lr: f64,
    pub warmup_frac: f64,
    pub total_steps: u64,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            per_device_batch: 4,
            grad_accum: 8,
            n_gpu: 8,
            seq_len: 2048,
            main_lr: 1.5e-5,
            embed_lr_ratio: 0.5,
            min_lr: 0.0,
            warmup_frac: 0.10,
            total_steps: 16_440,
            max_grad_norm: 5.0,
            seed: 3407,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        let counts = [
            self.per_device_batch,
            self.grad_accum,
            self.n_gpu,
            self.seq_len,
            self.total_steps,
        ];
        if counts.contains(&0) {
            return Err(PlanError::InvalidConfig("counts must be positive".into()));
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return Err(PlanError::InvalidConfig(
                "warmup_frac must lie in (0, 1)".into(),
            ));
        }
        if !(self.main_lr > 0.0) || !(self.embed_lr_ratio > 0.0) || self.min_lr < 0.0 {
            return Err(PlanError::InvalidConfig(
                "learning rates must be positive, min_lr nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Tokens consumed per optimizer step and the effective batch size.
    pub fn tokens_per_step(&self) -> (u64, u64) {
        let batch = self.per_device_batch * self.grad_accum * self.n_gpu;
        (batch * self.seq_len, batch)
    }

    /// Warmup duration in (fractional) steps.
    pub fn warmup_steps(&self) -> f64 {
        self.warmup_frac * self.total_steps as f64
    }

    /// Learning rate at step `t` for the given parameter group: linear ramp
    /// to the group's peak over the warmup, cosine to `min_lr` after.
    pub fn lr_at(&self, t: f64, group: ParamGroup) -> f64 {
        let peak = match group {
            ParamGroup::Main => self.main_lr,
            ParamGroup::Embedding => self.main_lr * self.embed_lr_ratio,
        };
        let t_w = self.warmup_steps();
        let total = self.total_steps as f64;
        if t <= t_w {
            peak * t / t_w
        } else {
            let phase = (t - t_w) / (total - t_w) * std::f64::consts::PI;
            self.min_lr + 0.5 * (peak - self.min_lr) * (1.0 + phase.cos())
        }
    }
}

/// Stable peak learning rate transferred across ranks:
/// `eta_ref * sqrt(r_ref / r_target)`.
pub fn max_stable_lr(r_target: u64, r_ref: u64, eta_ref: f64) -> f64 {
    eta_ref * (r_ref as f64 / r_target as f64).sqrt()
}

/// Full Cartesian product of the axis levels, minus any configuration
/// matching an exclusion (a configuration is excluded when every pair in
/// some exclusion map matches it). Axes iterate in name order with the
/// last axis fastest; levels keep their given order.
pub fn factorial_grid(
    axes: &BTreeMap<String, Vec<String>>,
    exclusions: &[BTreeMap<String, String>],
) -> Vec<BTreeMap<String, String>> {
    let names: Vec<&String> = axes.keys().collect();
    let levels: Vec<&Vec<String>> = axes.values().collect();
    if levels.iter().any(|l| l.is_empty()) {
        return Vec::new();
    }
    let total: usize = levels.iter().map(|l| l.len()).product();
    let mut grid = Vec::with_capacity(total);
    let mut odometer = vec![0usize; names.len()];
    for _ in 0..total {
        let config: BTreeMap<String, String> = odometer
            .iter()
            .enumerate()
            .map(|(axis, &i)| (names[axis].clone(), levels[axis][i].clone()))
            .collect();
        let excluded = exclusions.iter().any(|ex| {
            ex.iter()
                .all(|(k, v)| config.get(k).map(|have| have == v).unwrap_or(false))
        });
        if !excluded {
            grid.push(config);
        }
        for pos in (0..odometer.len()).rev() {
            odometer[pos] += 1;
            if odometer[pos] < levels[pos].len() {
                break;
            }
            odometer[pos] = 0;
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1.0)
    }

    #[test]
    fn production_tokens_per_step() {
        let plan = TrainPlan::default();
        assert_eq!(plan.tokens_per_step(), (524_288, 256));
    }

    #[test]
    fn sweep_tokens_per_step() {
        let plan = TrainPlan {
            per_device_batch: 16,
            grad_accum: 8,
            n_gpu: 1,
            seq_len: 2048,
            ..TrainPlan::default()
        };
        assert_eq!(plan.tokens_per_step(), (262_144, 128));
    }

    #[test]
    fn degenerate_tokens_per_step() {
        let plan = TrainPlan {
            per_device_batch: 1,
            grad_accum: 1,
            n_gpu: 1,
            seq_len: 1,
            ..TrainPlan::default()
        };
        assert_eq!(plan.tokens_per_step(), (1, 1));
    }

    #[test]
    fn standard_scaling_lr() {
        let cfg = LoraConfig {
            rslora: false,
            ..LoraConfig::rank_scaled(512)
        };
        assert_eq!(effective_lr(1.0, &cfg), 2.0);
    }

    #[test]
    fn rank_stabilized_scaling_lr() {
        let cfg = LoraConfig::rank_scaled(512);
        assert!(close(effective_lr(1.0, &cfg), 45.254833995939045, 1e-9));
        let standard = LoraConfig {
            rslora: false,
            ..cfg.clone()
        };
        let ratio = effective_lr(1.0, &cfg) / effective_lr(1.0, &standard);
        assert!(close(ratio, 512f64.sqrt(), 1e-9));
    }

    #[test]
    fn rank_one_scaling_degenerates_to_alpha() {
        let mut cfg = LoraConfig::rank_scaled(1);
        cfg.alpha = 7.0;
        assert_eq!(effective_lr(1.0, &cfg), 7.0);
        cfg.rslora = false;
        assert_eq!(effective_lr(1.0, &cfg), 7.0);
    }

    #[test]
    fn small_param_count() {
        let cfg = LoraConfig {
            rank: 2,
            alpha: 4.0,
            dropout: 0.0,
            rslora: true,
            target_modules: BTreeSet::new(),
        };
        let modules = vec![ModuleDescriptor {
            name: "proj".into(),
            d_in: 4,
            d_out: 6,
            count: 1,
        }];
        assert_eq!(trainable_params(&cfg, &modules).unwrap(), 20);
    }

    #[test]
    fn params_respect_target_selection() {
        let modules = vec![
            ModuleDescriptor { name: "a".into(), d_in: 2, d_out: 3, count: 1 },
            ModuleDescriptor { name: "b".into(), d_in: 10, d_out: 10, count: 2 },
        ];
        let mut cfg = LoraConfig::rank_scaled(1);
        cfg.target_modules.insert("a".into());
        assert_eq!(trainable_params(&cfg, &modules).unwrap(), 5);
        cfg.target_modules.clear();
        assert_eq!(trainable_params(&cfg, &modules).unwrap(), 45);
    }

    #[test]
    fn missing_module_dims_rejected() {
        let mut cfg = LoraConfig::rank_scaled(4);
        cfg.target_modules.insert("ghost".into());
        let err = trainable_params(&cfg, &[]).unwrap_err();
        assert!(matches!(err, PlanError::MissingModuleDims(name) if name == "ghost"));
    }

    #[test]
    fn zero_rank_rejected() {
        let cfg = LoraConfig { rank: 0, ..LoraConfig::rank_scaled(1) };
        assert!(matches!(
            trainable_params(&cfg, &[]),
            Err(PlanError::InvalidConfig(_))
        ));
    }

    #[test]
    fn architecture_parsing_skips_comments_and_blanks() {
        let text = "# transformer blocks\nq_proj 4096 4096 32\n\nlm_head 4096 100352 1  # untied head\n";
        let modules = parse_architecture(text).unwrap();
        assert_eq!(modules.len(), 2);
        assert_eq!(modules[0].name, "q_proj");
        assert_eq!(modules[1].d_out, 100_352);
    }

    #[test]
    fn architecture_parsing_rejects_malformed_lines() {
        let short = parse_architecture("q_proj 4096 4096");
        assert!(matches!(
            short,
            Err(PlanError::BadArchLine { line: 1, .. })
        ));
        let bad_num = parse_architecture("ok 1 2 3\nq_proj four 4096 32");
        assert!(matches!(
            bad_num,
            Err(PlanError::BadArchLine { line: 2, .. })
        ));
        let zero = parse_architecture("q_proj 0 4096 32");
        assert!(matches!(zero, Err(PlanError::BadArchLine { line: 1, .. })));
    }

    #[test]
    fn group_classification() {
        assert_eq!(param_group("model.embed_tokens.lora_A"), ParamGroup::Embedding);
        assert_eq!(param_group("lm_head.lora_B"), ParamGroup::Embedding);
        assert_eq!(param_group("model.layers.3.q_proj.lora_A"), ParamGroup::Main);
        assert_eq!(param_group("gate_proj"), ParamGroup::Main);
    }

    #[test]
    fn schedule_endpoints_and_peaks() {
        let plan = TrainPlan::default();
        let t_w = plan.warmup_steps();
        assert_eq!(plan.lr_at(0.0, ParamGroup::Main), 0.0);
        assert!(close(plan.lr_at(t_w, ParamGroup::Main), 1.5e-5, 1e-12));
        assert!(close(plan.lr_at(t_w, ParamGroup::Embedding), 7.5e-6, 1e-12));
        let end = plan.lr_at(plan.total_steps as f64, ParamGroup::Main);
        assert!(end.abs() < 1e-20);
    }

    #[test]
    fn schedule_midpoint_hits_half_range() {
        let plan = TrainPlan {
            min_lr: 2e-6,
            ..TrainPlan::default()
        };
        let t_w = plan.warmup_steps();
        let mid = (t_w + plan.total_steps as f64) / 2.0;
        let want = plan.min_lr + 0.5 * (plan.main_lr - plan.min_lr);
        assert!(close(plan.lr_at(mid, ParamGroup::Main), want, 1e-12));
    }

    #[test]
    fn stable_lr_rank_transfer() {
        assert_eq!(max_stable_lr(512, 128, 5e-5), 2.5e-5);
        assert_eq!(max_stable_lr(128, 128, 5e-5), 5e-5);
        assert!(close(max_stable_lr(256, 128, 5e-5), 5e-5 / 2f64.sqrt(), 1e-12));
    }

    fn sweep_axes() -> BTreeMap<String, Vec<String>> {
        BTreeMap::from([
            (
                "lr".to_string(),
                vec!["3.45e-5".to_string(), "5e-5".to_string()],
            ),
            (
                "rank".to_string(),
                vec!["128".to_string(), "256".to_string(), "512".to_string()],
            ),
            (
                "target".to_string(),
                vec!["attn_only".to_string(), "full".to_string()],
            ),
        ])
    }

    #[test]
    fn full_factorial_has_twelve_cells() {
        let grid = factorial_grid(&sweep_axes(), &[]);
        assert_eq!(grid.len(), 12);
        assert_eq!(grid[0]["lr"], "3.45e-5");
        assert_eq!(grid[0]["rank"], "128");
        assert_eq!(grid[0]["target"], "attn_only");
        assert_eq!(grid[11]["lr"], "5e-5");
        assert_eq!(grid[11]["rank"], "512");
        assert_eq!(grid[11]["target"], "full");
    }

    #[test]
    fn exclusions_drop_matching_cells() {
        let exclusion = BTreeMap::from([
            ("rank".to_string(), "512".to_string()),
            ("lr".to_string(), "5e-5".to_string()),
        ]);
        let grid = factorial_grid(&sweep_axes(), &[exclusion]);
        assert_eq!(grid.len(), 10);
        assert!(grid
            .iter()
            .all(|c| !(c["rank"] == "512" && c["lr"] == "5e-5")));
    }

    #[test]
    fn single_axis_single_level() {
        let axes = BTreeMap::from([("rank".to_string(), vec!["512".to_string()])]);
        let grid = factorial_grid(&axes, &[]);
        assert_eq!(grid.len(), 1);
    }

    #[test]
    fn plan_validation_bounds() {
        assert!(TrainPlan::default().validate().is_ok());
        let bad = TrainPlan { warmup_frac: 0.0, ..TrainPlan::default() };
        assert!(bad.validate().is_err());
        let bad = TrainPlan { n_gpu: 0, ..TrainPlan::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn scaling_ratio_is_sqrt_rank(
            rank in 1u64..=4096,
            alpha in 0.5f64..4096.0,
            eta in 1e-7f64..1e-2,
        ) {
            let rs = LoraConfig { rank, alpha, dropout: 0.0, rslora: true, target_modules: BTreeSet::new() };
            let std_cfg = LoraConfig { rslora: false, ..rs.clone() };
            let ratio = effective_lr(eta, &rs) / effective_lr(eta, &std_cfg);
            prop_assert!(close(ratio, (rank as f64).sqrt(), 1e-9));
        }

        #[test]
        fn schedule_continuous_at_warmup_end(
            total in 10u64..100_000,
            frac in 0.01f64..0.99,
            peak in 1e-7f64..1e-2,
            min_frac in 0.0f64..0.9,
        ) {
            let plan = TrainPlan {
                total_steps: total,
                warmup_frac: frac,
                main_lr: peak,
                min_lr: peak * min_frac,
                ..TrainPlan::default()
            };
            let t_w = plan.warmup_steps();
            let ramp_end = peak * t_w / t_w;
            let phase = 0.0f64;
            let cos_start = plan.min_lr + 0.5 * (peak - plan.min_lr) * (1.0 + phase.cos());
            prop_assert!(close(ramp_end, cos_start, 1e-12));
            prop_assert!(close(plan.lr_at(t_w, ParamGroup::Main), peak, 1e-12));
        }

        #[test]
        fn params_linear_in_rank(
            rank in 1u64..=2048,
            dims in proptest::collection::vec((1u64..=8192, 1u64..=8192, 1u64..=64), 1..6),
        ) {
            let modules: Vec<ModuleDescriptor> = dims
                .iter()
                .enumerate()
                .map(|(i, &(d_in, d_out, count))| ModuleDescriptor {
                    name: format!("m{i}"),
                    d_in,
                    d_out,
                    count,
                })
                .collect();
            let single = LoraConfig { rank, ..LoraConfig::rank_scaled(rank) };
            let double = LoraConfig { rank: 2 * rank, ..LoraConfig::rank_scaled(2 * rank) };
            let p1 = trainable_params(&single, &modules).unwrap();
            let p2 = trainable_params(&double, &modules).unwrap();
            prop_assert_eq!(p2, 2 * p1);
        }

        #[test]
        fn tokens_invariant_under_factor_order(
            b in 1u64..=1024,
            g in 1u64..=1024,
            n in 1u64..=64,
            l in 1u64..=8192,
        ) {
            let base = TrainPlan { per_device_batch: b, grad_accum: g, n_gpu: n, seq_len: l, ..TrainPlan::default() };
            let swapped = TrainPlan { per_device_batch: g, grad_accum: n, n_gpu: b, seq_len: l, ..TrainPlan::default() };
            prop_assert_eq!(base.tokens_per_step().0, swapped.tokens_per_step().0);
            prop_assert_eq!(base.tokens_per_step().0, b * g * n * l);
        }
    }
}
