//! Run planning: batch math, adapter scaling, schedule, and grids.
//!
//! tokens/step = per_device_batch x grad_accum x n_gpu x seq_len.
//! Rank-stabilized adapters scale by alpha/sqrt(r) instead of alpha/r,
//! which keeps the effective learning rate from collapsing at high rank;
//! the stable-LR rule transfers a known-good LR across ranks by the same
//! square-root law.

use std::collections::BTreeMap;
use std::path::Path;

use forge::{
    effective_lr, factorial_grid, max_stable_lr, read_architecture, trainable_params, LoraConfig,
    ParamGroup, TrainPlan,
};

fn main() {
    let plan = TrainPlan::default();
    let (tokens, batch) = plan.tokens_per_step();
    println!("batch: {batch} sequences/step, {tokens} tokens/step");

    let lora = LoraConfig::rank_scaled(512);
    let mut standard = lora.clone();
    standard.rslora = false;
    println!(
        "rank {}: effective lr {:.3e} rank-stabilized vs {:.3e} standard ({:.1}x)",
        lora.rank,
        effective_lr(plan.main_lr, &lora),
        effective_lr(plan.main_lr, &standard),
        effective_lr(plan.main_lr, &lora) / effective_lr(plan.main_lr, &standard),
    );
    println!(
        "stable-lr transfer: 5e-5 at r=128 -> {:.2e} at r=512",
        max_stable_lr(512, 128, 5e-5)
    );

    let arch = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/olmo3_7b_arch.txt");
    let modules = read_architecture(&arch).unwrap();
    println!(
        "trainable adapter parameters at r=512, all modules: {}",
        trainable_params(&lora, &modules).unwrap()
    );

    // Both parameter groups share the schedule shape; the embedding
    // group's peak is scaled down by the embed ratio.
    println!("cosine schedule with {:.0}% linear warmup:", plan.warmup_frac * 100.0);
    for frac in [0.0, 0.05, 0.10, 0.50, 1.0] {
        let t = frac * plan.total_steps as f64;
        println!(
            "  step {:>6.0}: main {:.3e}  embedding {:.3e}",
            t,
            plan.lr_at(t, ParamGroup::Main),
            plan.lr_at(t, ParamGroup::Embedding)
        );
    }

    // Factorial sweep grid with an exclusion: drop the configs that
    // would pair the highest rank with the highest learning rate.
    let mut axes = BTreeMap::new();
    axes.insert("rank".to_string(), vec!["128".into(), "256".into(), "512".into()]);
    axes.insert("lr".to_string(), vec!["3.45e-5".into(), "5e-5".into()]);
    axes.insert("target".to_string(), vec!["full".into(), "attn_only".into()]);
    let mut exclude = BTreeMap::new();
    exclude.insert("rank".to_string(), "512".to_string());
    exclude.insert("lr".to_string(), "5e-5".to_string());
    let grid = factorial_grid(&axes, &[exclude]);
    println!("grid: {} configs after exclusions (3x2x2 - 2)", grid.len());
    for config in grid.iter().take(3) {
        println!("  {config:?}");
    }
}
