//! Garbage cleaning and sample rejection.
//!
//! Six line-level rules run to a fixpoint: separator art, repeated-char
//! runs, box-drawing rows, trailing whitespace, tab normalization, and
//! blank-line squeezing. A sample is rejected when cleaning removed more
//! than 70% of it, or when what survives shows neither a code token nor
//! twenty words of prose.

use forge::{process, CleanPolicy};

fn main() {
    let policy = CleanPolicy::default();
    let cases = [
        (
            "driver fragment",
            "int init(void)\n{\n    /* setup */\n    return 0;\n}\n----------------------\n",
        ),
        (
            "ascii banner",
            "****************************\n*   WELCOME TO THE TOOL    *\n****************************\n",
        ),
        (
            "prose paragraph",
            "The interrupt controller latches the pending bit until software \
             acknowledges it by writing one to the status register, which is \
             why the handler must always clear before returning.",
        ),
        ("padding noise", "xxxxxxxxxxxxxxxxxxxx\n\n\n\n\n\n\n\n\n\nyyyyyyyyyyyyyyyyyyyy\n"),
    ];

    for (label, raw) in cases {
        let (cleaned, report) = process(raw, &policy);
        println!(
            "{label:<16} {:>3} -> {:>3} chars  ratio {:.2}  accepted: {}{}",
            raw.chars().count(),
            cleaned.chars().count(),
            report.garbage_ratio_before,
            report.accepted,
            report
                .reject_reason
                .map(|r| format!("  ({r:?})"))
                .unwrap_or_default()
        );
    }

    // Cleaning is idempotent: a second pass never finds more garbage.
    let (once, _) = process(cases[0].1, &policy);
    let (twice, report) = process(&once, &policy);
    assert_eq!(once, twice);
    assert_eq!(report.removed_chars, 0);
    println!("fixpoint: second pass removed 0 chars");
}
