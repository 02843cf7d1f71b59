//! Sweep analytics over the bundled run fixture.
//!
//! Marginal effects average the final loss at each level of one axis
//! across all settings of the others; delta is first level minus last
//! in level order, on means rounded to 3 decimals. Gradient statistics
//! rank runs by peak norm; duplicate names are flagged, never merged.

use std::path::Path;

use forge::records::read_jsonl_file;
use forge::{
    duplicate_names, grad_stats, marginal_effects, reduction, total_gpu_hours, SweepRun,
};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn main() {
    let runs: Vec<SweepRun> = read_jsonl_file(&fixture("sweep_runs.jsonl")).unwrap();

    for axis in ["rank", "target", "lr"] {
        let effect = marginal_effects(&runs, axis).unwrap();
        println!("axis {axis}:");
        for level in &effect.levels {
            println!(
                "  {:<10} mean final loss {:.3}  ({} runs)",
                level.level, level.mean_rounded, level.runs
            );
        }
        println!("  delta {:.3}", effect.delta);
    }

    println!("\nper-run loss reduction:");
    for run in &runs {
        println!("  {:<16} {:>5.1}%", run.name, reduction(run));
    }
    println!("total compute: {:.1} GPU-hours", total_gpu_hours(&runs));

    // The gradient-norm table keeps a duplicated row verbatim; analysis
    // flags it instead of silently resolving it.
    let grads: Vec<SweepRun> = read_jsonl_file(&fixture("sweep_grad_norms.jsonl")).unwrap();
    println!("\ngradient-norm ranking (peak desc):");
    for run in grad_stats(&grads).iter().take(5) {
        println!("  {:<16} peak {:>5.2}  mean {:>4.2}", run.name, run.peak_grad, run.mean_grad);
    }
    let dups = duplicate_names(&grads);
    if !dups.is_empty() {
        println!("duplicate rows flagged: {dups:?}");
    }
}
