//! Command-line surface for the corpus pipeline and training toolkit.
//!
//! Data flows on stdout, diagnostics on stderr, so subcommands compose
//! in shell pipelines. Exit codes: 0 success, 1 usage, 2 data error,
//! 3 emergency save observed (monitor only).

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use walkdir::WalkDir;

use forge::records::{read_jsonl, write_jsonl, ShardWriter};
use forge::{
    aggregate_gen_accuracy, assemble, category_from_path, config, effective_lr,
    evaluate_categories, ingest_documents, marginal_effects, marginal_effects_ordered, process,
    read_architecture, repair_order, split_large, trainable_params, verify_order, winner_table,
    CategoryManifest, GenPair, LoraConfig, PipelineConfig, RawDocument, RunEvent, Sample,
    SectionPolicy, SweepRun, TokenRecord, TrainPlan,
};

#[derive(Parser)]
#[command(name = "forge", version, about = "Corpus pipeline and training-run toolkit")]
struct Cli {
    /// Config file; falls back to $FORGE_CONFIG, then to built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw documents into sample records.
    Ingest(IngestArgs),
    /// Split oversized samples at code-aware boundaries.
    Split(SplitArgs),
    /// Remove garbage lines and reject low-yield samples.
    Clean,
    /// Truncate, terminate, and pack samples into training windows.
    Pack(PackArgs),
    /// Print a per-category corpus summary.
    Stats,
    /// Compute batch, learning-rate, and parameter figures for a run.
    Plan(PlanArgs),
    /// Scan a run-event stream for anomalies and summarize it.
    Monitor(MonitorArgs),
    /// Score model outputs.
    Eval(EvalArgs),
    /// Analyze a sweep-results file along one axis.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of raw text files; without it, raw-document records are
    /// read from stdin.
    #[arg(long, value_name = "DIR")]
    root: Option<PathBuf>,
    /// Path-prefix to category manifest file.
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Override the maximum chunk size in characters.
    #[arg(long, value_name = "N")]
    max_chars: Option<usize>,
}

#[derive(Args)]
struct PackArgs {
    /// Training window size in tokens; defaults to the assembly budget.
    #[arg(long, value_name = "N")]
    window: Option<u64>,
    /// Write packed windows as sharded files here instead of stdout.
    #[arg(long, value_name = "DIR")]
    shard_dir: Option<PathBuf>,
    /// Records per shard file.
    #[arg(long, value_name = "N")]
    shard_size: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    /// Adapter rank.
    #[arg(long)]
    rank: u64,
    /// Adapter scaling numerator; defaults to 2x rank.
    #[arg(long)]
    alpha: Option<f64>,
    /// Per-device micro-batch size.
    #[arg(long, value_name = "N")]
    bdev: Option<u64>,
    /// Gradient accumulation steps.
    #[arg(long, value_name = "N")]
    gacc: Option<u64>,
    /// Data-parallel device count.
    #[arg(long, value_name = "N")]
    gpus: Option<u64>,
    /// Sequence length in tokens.
    #[arg(long, value_name = "N")]
    seq: Option<u64>,
    /// Peak learning rate for the main parameter group.
    #[arg(long)]
    lr: Option<f64>,
    /// Total optimizer steps.
    #[arg(long, value_name = "N")]
    steps: Option<u64>,
    /// Architecture descriptor file; enables the parameter count.
    #[arg(long, value_name = "PATH")]
    arch: Option<PathBuf>,
    /// Disable rank-stabilized scaling (alpha/r instead of alpha/sqrt r).
    #[arg(long)]
    no_rslora: bool,
}

#[derive(Args)]
struct MonitorArgs {
    /// Event file; without it, events are read from stdin.
    #[arg(long, value_name = "PATH")]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(subcommand)]
    task: EvalTask,
}

#[derive(Subcommand)]
enum EvalTask {
    /// Per-category perplexity and top-k accuracy from token records.
    Ppl,
    /// Positional token accuracy from generation pairs.
    Gen,
    /// Per-category best model from an accuracy matrix.
    Winners(WinnersArgs),
}

#[derive(Args)]
struct WinnersArgs {
    /// Accuracy matrix file (model -> category -> score); stdin without it.
    #[arg(long, value_name = "PATH")]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep-run records, one JSON object per line.
    #[arg(long, value_name = "PATH")]
    runs: PathBuf,
    /// Config axis to marginalize over.
    #[arg(long, value_name = "NAME")]
    axis: String,
    /// Explicit level order, comma-separated; overrides the inferred order.
    #[arg(long, value_name = "L1,L2,...", value_delimiter = ',')]
    order: Option<Vec<String>>,
    /// Emit one machine-readable JSON record instead of the text table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("forge: error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = config::load(cli.config.as_deref())?;
    cfg.validate()?;
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count as usize)
        .build_global();
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Split(args) => cmd_split(&cfg, args),
        Command::Clean => cmd_clean(&cfg),
        Command::Pack(args) => cmd_pack(&cfg, args),
        Command::Stats => cmd_stats(&cfg),
        Command::Plan(args) => cmd_plan(args),
        Command::Monitor(args) => cmd_monitor(args),
        Command::Eval(args) => match args.task {
            EvalTask::Ppl => cmd_eval_ppl(),
            EvalTask::Gen => cmd_eval_gen(),
            EvalTask::Winners(w) => cmd_eval_winners(w),
        },
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn stdin_records<T: serde::de::DeserializeOwned>() -> Result<Vec<T>> {
    let stdin = io::stdin();
    read_jsonl(stdin.lock()).context("reading records from stdin")
}

fn emit_records<T: serde::Serialize>(records: &[T]) -> Result<()> {
    let stdout = io::stdout();
    write_jsonl(&mut stdout.lock(), records)?;
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<u8> {
    let manifest = match &args.manifest {
        Some(path) => Some(CategoryManifest::from_file(path)?),
        None => None,
    };
    let docs = match &args.root {
        Some(root) => {
            let mut docs = Vec::new();
            for entry in WalkDir::new(root).sort_by_file_name() {
                let entry = entry?;
                if !entry.file_type().is_file() {
                    continue;
                }
                let path = entry.path();
                let content = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                if content.trim().is_empty() {
                    eprintln!("forge: skipping empty file {}", path.display());
                    continue;
                }
                let rel = path.strip_prefix(root).unwrap_or(path);
                let category = manifest
                    .as_ref()
                    .and_then(|m| m.category_for(rel))
                    .map(str::to_string)
                    .unwrap_or_else(|| category_from_path(rel));
                docs.push(RawDocument::new(
                    rel.to_string_lossy().into_owned(),
                    content,
                    category,
                )?);
            }
            docs
        }
        None => stdin_records::<RawDocument>()?,
    };
    let mut samples = ingest_documents(&docs, &SectionPolicy::default());
    let report = verify_order(&samples)?;
    if !report.all_ok() {
        eprintln!("forge: sample order repaired: {report:?}");
        repair_order(&mut samples);
    }
    emit_records(&samples)?;
    eprintln!(
        "forge: ingested {} documents into {} samples",
        docs.len(),
        samples.len()
    );
    Ok(0)
}

fn cmd_split(cfg: &PipelineConfig, args: SplitArgs) -> Result<u8> {
    let mut policy = cfg.split.clone();
    if let Some(max) = args.max_chars {
        policy.max_chars = max;
    }
    policy.validate()?;
    let samples: Vec<Sample> = stdin_records()?;
    let outcomes = samples
        .par_iter()
        .map(|s| split_large(&s.text, &policy))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    let (mut split_parents, mut hard, mut dropped) = (0u64, 0u64, 0u64);
    for (sample, outcome) in samples.iter().zip(&outcomes) {
        if outcome.chunks.len() > 1 {
            split_parents += 1;
        }
        hard += outcome.hard_split_count as u64;
        dropped += outcome.dropped_chunks as u64;
        for chunk in &outcome.chunks {
            let mut child = sample.clone();
            child.text = chunk.clone();
            out.push(child);
        }
    }
    emit_records(&out)?;
    eprintln!(
        "forge: {} samples in, {} chunks out ({} split, {} hard cuts, {} dropped)",
        samples.len(),
        out.len(),
        split_parents,
        hard,
        dropped
    );
    Ok(0)
}

fn cmd_clean(cfg: &PipelineConfig) -> Result<u8> {
    let samples: Vec<Sample> = stdin_records()?;
    let results: Vec<_> = samples
        .par_iter()
        .map(|s| process(&s.text, &cfg.clean))
        .collect();
    let mut kept = Vec::new();
    let mut rejected: std::collections::BTreeMap<String, u64> = Default::default();
    let mut removed_chars = 0u64;
    for (sample, (text, report)) in samples.iter().zip(results) {
        removed_chars += report.removed_chars as u64;
        if report.accepted {
            let mut s = sample.clone();
            s.text = text;
            kept.push(s);
        } else {
            let reason = report
                .reject_reason
                .map(|r| format!("{r:?}"))
                .unwrap_or_else(|| "unknown".to_string());
            *rejected.entry(reason).or_default() += 1;
        }
    }
    emit_records(&kept)?;
    let total_rejected: u64 = rejected.values().sum();
    eprintln!(
        "forge: kept {} of {} samples, rejected {}, removed {} chars",
        kept.len(),
        samples.len(),
        total_rejected,
        removed_chars
    );
    for (reason, count) in &rejected {
        eprintln!("forge:   rejected {count} ({reason})");
    }
    Ok(0)
}

fn cmd_pack(cfg: &PipelineConfig, args: PackArgs) -> Result<u8> {
    let policy = cfg.assembly.build()?;
    let window = args.window.unwrap_or(policy.max_tokens);
    let samples: Vec<Sample> = stdin_records()?;
    let outcome = assemble(samples, &policy, window)?;
    match &args.shard_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let size = args.shard_size.unwrap_or(cfg.shard_size_records);
            let mut writer = ShardWriter::new(dir, "pack", size)?;
            for w in &outcome.windows {
                writer.write(w)?;
            }
            let paths = writer.finish()?;
            eprintln!("forge: wrote {} shards under {}", paths.len(), dir.display());
        }
        None => emit_records(&outcome.windows)?,
    }
    eprintln!(
        "forge: packed {} samples into {} windows, fill {:.4}, truncated {}",
        outcome.samples.len(),
        outcome.windows.len(),
        outcome.stats.packing_fill_rate.unwrap_or(0.0),
        outcome.truncated_count
    );
    Ok(0)
}

fn cmd_stats(cfg: &PipelineConfig) -> Result<u8> {
    let counter = cfg.assembly.counter.build()?;
    let samples: Vec<Sample> = stdin_records()?;
    if samples.is_empty() {
        bail!("no samples on stdin");
    }
    let counts = samples
        .par_iter()
        .map(|s| counter.count_text(&s.text))
        .collect::<std::result::Result<Vec<u64>, _>>()?;
    let mut per_cat: std::collections::BTreeMap<&str, (u64, u64)> = Default::default();
    for (sample, tokens) in samples.iter().zip(&counts) {
        let entry = per_cat.entry(&sample.category).or_default();
        entry.0 += 1;
        entry.1 += tokens;
    }
    let total_samples = samples.len() as u64;
    let total_tokens: u64 = counts.iter().sum();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "{:<24} {:>10} {:>14} {:>12} {:>8}",
        "category", "samples", "tokens", "mean", "share"
    )?;
    for (cat, (n, tokens)) in &per_cat {
        writeln!(
            out,
            "{:<24} {:>10} {:>14} {:>12.1} {:>7.1}%",
            cat,
            n,
            tokens,
            *tokens as f64 / *n as f64,
            100.0 * *tokens as f64 / total_tokens as f64
        )?;
    }
    writeln!(
        out,
        "{:<24} {:>10} {:>14} {:>12.1} {:>7.1}%",
        "total",
        total_samples,
        total_tokens,
        total_tokens as f64 / total_samples as f64,
        100.0
    )?;
    Ok(0)
}

/// Digit grouping for report readability: 524288 -> "524,288".
fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn cmd_plan(args: PlanArgs) -> Result<u8> {
    let mut lora = LoraConfig::rank_scaled(args.rank);
    if let Some(alpha) = args.alpha {
        lora.alpha = alpha;
    }
    lora.rslora = !args.no_rslora;
    lora.validate()?;

    let mut plan = TrainPlan::default();
    if let Some(b) = args.bdev {
        plan.per_device_batch = b;
    }
    if let Some(g) = args.gacc {
        plan.grad_accum = g;
    }
    if let Some(n) = args.gpus {
        plan.n_gpu = n;
    }
    if let Some(s) = args.seq {
        plan.seq_len = s;
    }
    if let Some(lr) = args.lr {
        plan.main_lr = lr;
    }
    if let Some(t) = args.steps {
        plan.total_steps = t;
    }
    plan.validate()?;

    let (tokens, batch) = plan.tokens_per_step();
    let eff = effective_lr(plan.main_lr, &lora);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "adapter rank:              {}", lora.rank)?;
    writeln!(out, "adapter alpha:             {}", lora.alpha)?;
    writeln!(
        out,
        "scaling:                   {}",
        if lora.rslora { "alpha/sqrt(r)" } else { "alpha/r" }
    )?;
    writeln!(out, "peak lr (main):            {:e}", plan.main_lr)?;
    writeln!(
        out,
        "peak lr (embedding):       {:e}",
        plan.main_lr * plan.embed_lr_ratio
    )?;
    writeln!(out, "effective lr:              {eff:e}")?;
    writeln!(
        out,
        "sequences per step:        {}",
        group_thousands(batch)
    )?;
    writeln!(
        out,
        "tokens per optimizer step: {}",
        group_thousands(tokens)
    )?;
    writeln!(
        out,
        "warmup steps:              {} of {}",
        group_thousands(plan.warmup_steps().round() as u64),
        group_thousands(plan.total_steps)
    )?;
    if let Some(arch) = &args.arch {
        let modules = read_architecture(arch)?;
        let params = trainable_params(&lora, &modules)?;
        writeln!(
            out,
            "trainable parameters:      {}",
            group_thousands(params)
        )?;
    }
    Ok(0)
}

fn cmd_monitor(args: MonitorArgs) -> Result<u8> {
    let reader: Box<dyn BufRead> = match &args.events {
        Some(path) => Box::new(BufReader::new(
            fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
        )),
        None => Box::new(BufReader::new(io::stdin())),
    };
    let mut monitor = forge::Monitor::new();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: RunEvent = serde_json::from_str(&line)
            .with_context(|| format!("line {}: malformed run event", idx + 1))?;
        for finding in monitor.observe(&event)? {
            serde_json::to_writer(&mut out, &finding)?;
            out.write_all(b"\n")?;
        }
    }
    match monitor.summary() {
        Ok(summary) => {
            serde_json::to_writer(&mut out, &summary)?;
            out.write_all(b"\n")?;
        }
        Err(forge::monitor::MonitorError::NoFiniteLoss) => {
            eprintln!("forge: no finite loss in stream, summary skipped");
        }
        Err(err) => return Err(err.into()),
    }
    eprintln!(
        "forge: {} anomalies, {} non-finite losses, throughput {} tok/s",
        monitor.anomaly_count(),
        monitor.nan_count(),
        monitor
            .throughput()
            .map(|t| format!("{t:.0}"))
            .unwrap_or_else(|_| "n/a".to_string())
    );
    if monitor.emergency_seen() {
        eprintln!("forge: emergency save was triggered");
        return Ok(3);
    }
    Ok(0)
}

fn cmd_eval_ppl() -> Result<u8> {
    let records: Vec<TokenRecord> = stdin_records()?;
    let reports = evaluate_categories(&records)?;
    emit_records(&reports)?;
    let overall = forge::perplexity(&records)?;
    eprintln!("forge: overall ppl {overall:.4} over {} tokens", records.len());
    Ok(0)
}

fn cmd_eval_gen() -> Result<u8> {
    let pairs: Vec<GenPair> = stdin_records()?;
    let rows = aggregate_gen_accuracy(&pairs)?;
    emit_records(&rows)?;
    eprintln!("forge: scored {} generation pairs", pairs.len());
    Ok(0)
}

fn cmd_eval_winners(args: WinnersArgs) -> Result<u8> {
    let text = match &args.matrix {
        Some(path) => {
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let mut buf = String::new();
            io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    let matrix: std::collections::BTreeMap<String, std::collections::BTreeMap<String, f64>> =
        serde_json::from_str(&text).context("parsing accuracy matrix")?;
    let winners = winner_table(&matrix)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, &winners)?;
    out.write_all(b"\n")?;
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let runs: Vec<SweepRun> = forge::records::read_jsonl_file(&args.runs)?;
    let effect = match &args.order {
        Some(order) => marginal_effects_ordered(&runs, &args.axis, order)?,
        None => marginal_effects(&runs, &args.axis)?,
    };
    let duplicates = forge::duplicate_names(&runs);
    if !duplicates.is_empty() {
        eprintln!("forge: duplicate run names: {}", duplicates.join(", "));
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if args.json {
        serde_json::to_writer(&mut out, &effect)?;
        out.write_all(b"\n")?;
        return Ok(0);
    }
    writeln!(out, "axis: {}", effect.axis)?;
    for level in &effect.levels {
        writeln!(
            out,
            "  {:<12} {:.3}  (raw {}, {} runs)",
            level.level, level.mean_rounded, level.mean_final_loss, level.runs
        )?;
    }
    writeln!(out, "delta (first - last): {:.3}", effect.delta)?;
    Ok(0)
}
