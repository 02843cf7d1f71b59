//! Streaming anomaly detection over a training log.
//!
//! The monitor flags non-finite losses immediately, requests an
//! emergency save on the third consecutive one, and reports loss or
//! gradient spikes against rolling 20-step windows. The summary anchors
//! its initial loss at step 10, after the first-steps transient.

use forge::{Monitor, RunEvent};

fn main() {
    let mut monitor = Monitor::new();

    for step in 1..=120u64 {
        let loss = match step {
            40..=42 => f64::NAN,
            90 => 1.55,
            _ => 1.0 - step as f64 * 0.001,
        };
        let grad = if step == 75 { 9.4 } else { 2.0 + (step % 5) as f64 * 0.1 };
        let event = RunEvent::new(step, loss, 0.62, 524_288).with_grad(grad);
        if step == 40 {
            // The preview travels with the finding so the offending batch
            // is identifiable without replaying the run.
            let event = event.clone().with_preview("mmio write 0x40021000 CR1 |= UE");
            for finding in monitor.observe(&event).unwrap() {
                println!("step {step:>3}: {finding:?}");
            }
            continue;
        }
        for finding in monitor.observe(&event).unwrap() {
            println!("step {step:>3}: {finding:?}");
        }
    }

    let summary = monitor.summary().unwrap();
    println!();
    println!("summary: {}", serde_json::to_string_pretty(&summary).unwrap());
    println!("throughput: {:.0} tokens/sec", monitor.throughput().unwrap());
    println!("emergency save requested: {}", monitor.emergency_seen());
}
