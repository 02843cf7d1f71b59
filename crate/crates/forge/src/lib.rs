//! Tokenizer-agnostic toolkit for continual-pretraining campaigns over
//! embedded-systems corpora: corpus curation (chunk, clean, filter, pack),
//! LoRA/RSLoRA run planning math, streaming training-log monitoring, the
//! evaluation metric stack, and sweep-result analytics.
//!
//! The crate never runs a model or a real tokenizer. Every stage that
//! reasons about "tokens" goes through a pluggable [`tokencount::TokenCounter`],
//! and the evaluation engine consumes per-token model-output records produced
//! by any inference stack.
//!
//! Pipeline stages connect through line-delimited JSON record streams; the
//! `forge` binary exposes each stage as a subcommand, and `examples/` holds
//! one runnable program per capability.

pub mod assemble;
pub mod chunk;
pub mod clean;
pub mod config;
pub mod ingest;
pub mod metrics;
pub mod monitor;
pub mod plan;
pub mod records;
pub mod sweep;
pub mod tokencount;

pub use assemble::{
    aggregate_fill, assemble, emit_window_text, pack, truncate_sample, AssembleOutcome,
    AssemblyPolicy, CorpusStats, PackedSequence, Truncated,
};
pub use chunk::{detect_boundaries, split_large, BoundaryKind, SplitOutcome, SplitPolicy};
pub use clean::{process, CleanPolicy, CleanReport, RejectReason};
pub use config::PipelineConfig;
pub use ingest::{
    category_from_path, ingest_documents, repair_order, split_sections, verify_order,
    CategoryManifest, OrderReport, RawDocument, Sample, SectionPolicy,
};
pub use metrics::{
    aggregate_gen_accuracy, bleu4, brevity_penalty, delta_ppl, evaluate_categories,
    gen_token_accuracy, mean_nll, perplexity, split_teacher_forced, topk_accuracy, weighted_ppl,
    winner_table, CategoryReport, GenPair, GenReport, Smoothing, TokenRecord, WeightMode,
};
pub use monitor::{summarize, Finding, Monitor, RunEvent, RunSummary};
pub use plan::{
    effective_lr, factorial_grid, max_stable_lr, param_group, parse_architecture,
    read_architecture, trainable_params, LoraConfig, ModuleDescriptor, ParamGroup, TrainPlan,
};
pub use sweep::{
    duplicate_names, grad_stats, marginal_effects, marginal_effects_ordered, reduction, round3,
    total_gpu_hours, LevelMean, MarginalEffect, SweepRun,
};
pub use tokencount::{CounterSpec, TokenCounter};
