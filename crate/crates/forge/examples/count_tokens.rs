//! Token-counting strategies side by side.
//!
//! Every stage that reasons about "tokens" goes through a TokenCounter,
//! so the pipeline never needs a real tokenizer: a character heuristic
//! for budgeting, whitespace runs for quick sanity checks, and an
//! external count file for bit-exact replay of offline tokenizer output.

use forge::tokencount::ExternalCounts;
use forge::TokenCounter;

fn main() {
    let text = "static int probe(struct platform_device *pdev)\n{\n    return 0;\n}\n";

    // 3.5 chars/token approximates code; 4.0 approximates mixed text.
    // Both ceil, so a character budget never overshoots a token budget.
    let chunking = TokenCounter::chunking_default();
    let assembly = TokenCounter::assembly_default();
    let whitespace = TokenCounter::Whitespace;

    println!("text: {} chars", text.chars().count());
    println!("chars/3.5 (chunking):  {:>4} tokens", chunking.count_text(text).unwrap());
    println!("chars/4.0 (assembly):  {:>4} tokens", assembly.count_text(text).unwrap());
    println!("whitespace runs:       {:>4} tokens", whitespace.count_text(text).unwrap());

    // An external file pins exact counts per sample_idx, one
    // `idx<TAB>count` line each, for replaying real tokenizer numbers.
    let external = TokenCounter::External(ExternalCounts::parse("0\t17\n1\t2048\n").unwrap());
    println!(
        "external replay:       {:>4} tokens for sample 0",
        external.count_sample(0, text).unwrap()
    );

    // The 7,000-char exact-division case: 7000 / 3.5 = 2000 even.
    let long = "x".repeat(7000);
    println!("7000 chars at 3.5:     {:>4} tokens", chunking.count_text(&long).unwrap());
}
