//! Truncation and greedy sequence packing.
//!
//! Each sample is cut to the token budget (reserving one slot for the
//! end-of-text terminator) and then packed first-fit in corpus order:
//! a window closes as soon as the next sample no longer fits. Token
//! cost is conserved exactly, and order is never rearranged, so packed
//! data replays byte-identically.

use forge::{assemble, AssemblyPolicy, Sample};

fn sample(idx: u64, chars: usize) -> Sample {
    Sample {
        sample_idx: idx,
        text: "k".repeat(chars),
        category: "kernel".to_string(),
        source_file: None,
        origin_path: "mem".to_string(),
    }
}

fn main() {
    // 4 chars/token: 4,000 chars -> 1,000 tokens; 7,600 -> 1,900.
    // The 1,000/1,900 mix means two small samples share a window and
    // each large one rides alone, filling ~94% of capacity.
    let samples: Vec<Sample> = (0..40)
        .map(|i| sample(i, if i % 4 < 2 { 4_000 } else { 7_600 }))
        .collect();

    let policy = AssemblyPolicy::default();
    let out = assemble(samples, &policy, 2048).unwrap();

    for w in out.windows.iter().take(4) {
        println!(
            "window: members {:?}  used {:>4}/{:<4}  fill {:.3}",
            w.member_sample_idxs, w.used_tokens, w.window_tokens, w.fill_fraction
        );
    }
    println!("...");
    println!(
        "{} samples -> {} windows, aggregate fill {:.4}, mean sample {:.0} tokens",
        out.stats.sample_count,
        out.windows.len(),
        out.stats.packing_fill_rate.unwrap(),
        out.stats.mean_sample_tokens
    );

    let used: u64 = out.windows.iter().map(|w| w.used_tokens).sum();
    let cost: u64 = out.body_tokens.iter().map(|t| t + 1).sum();
    assert_eq!(used, cost);
    println!("conservation holds: used tokens == sample tokens + one terminator each");
}
