//! End-to-end tests of the `forge` binary: exit codes, stream separation,
//! and the shell-pipeline contract.

use std::io::Write;
use std::process::{Command, Output, Stdio};

fn forge(args: &[&str], stdin: &[u8], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forge"));
    cmd.args(args)
        .env_remove("FORGE_CONFIG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().expect("binary spawns");
    child.stdin.take().unwrap().write_all(stdin).unwrap();
    child.wait_with_output().expect("binary exits")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name)
}

fn sample_line(idx: u64, text: &str) -> String {
    serde_json::to_string(&serde_json::json!({
        "sample_idx": idx,
        "text": text,
        "category": "general",
        "source_file": null,
        "origin_path": "mem",
    }))
    .unwrap()
}

#[test]
fn clean_pipe_keeps_code_and_reports_rejections_on_stderr() {
    let input = format!(
        "{}\n{}\n",
        sample_line(0, "int main(void) {\n    return 0;\n}\n"),
        sample_line(1, "==========================\n----------\n")
    );
    let out = forge(&["clean"], input.as_bytes(), &[]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    let kept: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(kept.len(), 1);
    assert!(kept[0].contains("int main"));
    assert!(stderr_str(&out).contains("rejected 1"));
}

#[test]
fn plan_report_carries_step_token_arithmetic() {
    let out = forge(
        &["plan", "--rank", "512", "--alpha", "1024", "--bdev", "4", "--gacc", "8", "--gpus",
          "8", "--seq", "2048"],
        b"",
        &[],
    );
    assert!(out.status.success());
    let report = stdout_str(&out);
    assert!(report.contains("524,288"), "report missing token count:\n{report}");
    assert!(report.contains("256"));
    assert!(report.contains("alpha/sqrt(r)"));
}

#[test]
fn plan_with_architecture_reports_parameter_count() {
    let out = forge(
        &["plan", "--rank", "512", "--arch", &fixture("olmo3_7b_arch.txt")],
        b"",
        &[],
    );
    assert!(out.status.success());
    assert!(stdout_str(&out).contains("1,386,217,472"));
}

#[test]
fn sweep_prints_rank_means_and_flags_duplicates() {
    let out = forge(&["sweep", "--runs", &fixture("sweep_runs.jsonl"), "--axis", "rank"], b"", &[]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    for needle in ["axis: rank", "1.175", "1.025", "0.150"] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
    let dup = forge(
        &["sweep", "--runs", &fixture("sweep_grad_norms.jsonl"), "--axis", "rank"],
        b"",
        &[],
    );
    assert!(dup.status.success());
    assert!(stderr_str(&dup).contains("duplicate run names: r128-F-5e-5"));
}

#[test]
fn sweep_json_mode_emits_machine_record() {
    let out = forge(
        &["sweep", "--runs", &fixture("sweep_runs.jsonl"), "--axis", "target", "--json"],
        b"",
        &[],
    );
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout_str(&out).trim()).unwrap();
    assert_eq!(v["axis"], "target");
    assert_eq!(v["levels"][0]["level"], "attn_only");
}

#[test]
fn monitor_exits_three_on_emergency_save() {
    let mut input = String::new();
    for step in 1..=3 {
        input.push_str(&format!(
            "{{\"step\":{step},\"loss\":\"NaN\",\"step_time_sec\":1.0,\"tokens\":100}}\n"
        ));
    }
    let out = forge(&["monitor"], input.as_bytes(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout_str(&out).contains("emergency_save"));
    assert!(stderr_str(&out).contains("emergency save"));
}

#[test]
fn monitor_clean_stream_exits_zero_with_summary_line() {
    let mut input = String::new();
    for step in 1..=30 {
        input.push_str(&format!(
            "{{\"step\":{step},\"loss\":{},\"step_time_sec\":1.0,\"tokens\":1000}}\n",
            1.0 - step as f64 * 0.01
        ));
    }
    let out = forge(&["monitor"], input.as_bytes(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_str(&out);
    let last = text.lines().last().unwrap();
    let summary: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(summary["nan_count"], 0);
    assert!(summary["init_loss"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = forge(&["transmogrify"], b"", &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = forge(&["sweep", "--axis", "rank"], b"", &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_record_is_data_error_with_line_number() {
    let out = forge(&["clean"], b"{\"sample_idx\":0}\nnot json\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("line 1"));
}

#[test]
fn monitor_malformed_event_reports_line() {
    let out = forge(
        &["monitor"],
        b"{\"step\":1,\"loss\":1.0,\"step_time_sec\":1.0,\"tokens\":1}\nbroken\n",
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("line 2"));
}

#[test]
fn missing_config_file_is_data_error() {
    let out = forge(&["--config", "/nonexistent/forge.toml", "stats"], b"", &[]);
    assert_eq!(out.status.code(), Some(2));
    let env_out = forge(&["stats"], b"", &[("FORGE_CONFIG", "/nonexistent/forge.toml")]);
    assert_eq!(env_out.status.code(), Some(2));
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("forge.toml");
    std::fs::write(&config_path, "shard_size_records = 1\n\n[assembly]\nmax_tokens = 64\n").unwrap();
    let input = format!(
        "{}\n{}\n{}\n",
        sample_line(0, &"a".repeat(100)),
        sample_line(1, &"b".repeat(100)),
        sample_line(2, &"c".repeat(100)),
    );
    let shard_dir = dir.path().join("shards");
    let out = forge(
        &["--config", config_path.to_str().unwrap(), "pack", "--shard-dir",
          shard_dir.to_str().unwrap()],
        input.as_bytes(),
        &[],
    );
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let mut shards: Vec<_> = std::fs::read_dir(&shard_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    shards.sort();
    assert_eq!(shards, ["pack-00000.jsonl", "pack-00001.jsonl"]);

    let override_out = forge(
        &["--config", config_path.to_str().unwrap(), "pack", "--window", "128"],
        input.as_bytes(),
        &[],
    );
    assert!(override_out.status.success());
    let first: serde_json::Value =
        serde_json::from_str(stdout_str(&override_out).lines().next().unwrap()).unwrap();
    assert_eq!(first["window_tokens"], 128);
}

#[test]
fn pack_emits_window_records_on_stdout() {
    let input = format!("{}\n{}\n", sample_line(0, &"x".repeat(60)), sample_line(1, &"y".repeat(60)));
    let out = forge(&["pack", "--window", "64"], input.as_bytes(), &[]);
    assert!(out.status.success());
    let windows: Vec<serde_json::Value> = stdout_str(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let used: u64 = windows.iter().map(|w| w["used_tokens"].as_u64().unwrap()).sum();
    // CharHeuristic at 4 chars/token: 60 chars -> 15 body tokens + 1 EOS.
    assert_eq!(used, 32);
    assert!(stderr_str(&out).contains("packed 2 samples"));
}

#[test]
fn stats_prints_per_category_table() {
    let input = format!(
        "{}\n{}\n",
        sample_line(0, "int a;\nint b;\n"),
        sample_line(1, "void f(void);\n")
    );
    let out = forge(&["stats"], input.as_bytes(), &[]);
    assert!(out.status.success());
    let table = stdout_str(&out);
    assert!(table.contains("general"));
    assert!(table.contains("total"));
}

#[test]
fn eval_winners_reads_matrix_file() {
    let out = forge(&["eval", "winners", "--matrix", &fixture("gen_accuracy_matrix.json")], b"", &[]);
    assert!(out.status.success());
    let table: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(table["AMD GPU Registers"], serde_json::json!(["qwen", "spark"]));
}

#[test]
fn eval_ppl_emits_category_reports() {
    let mut input = String::new();
    for i in 0..10 {
        input.push_str(&serde_json::to_string(&serde_json::json!({
            "sample_id": "s0",
            "position": i,
            "ref_token_id": 7,
            "logprob_of_ref": -0.6931471805599453,
            "topk_ids": [7, 1, 2, 3, 4],
            "category": if i % 2 == 0 { "kernel" } else { "general" },
        })).unwrap());
        input.push('\n');
    }
    let out = forge(&["eval", "ppl"], input.as_bytes(), &[]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let reports: Vec<serde_json::Value> =
        stdout_str(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 2);
    assert!((reports[0]["ppl"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn ingest_walks_directory_and_assigns_contiguous_indices() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    std::fs::create_dir_all(root.join("kernel")).unwrap();
    let delim = "=".repeat(82);
    std::fs::write(
        root.join("kernel/a.txt"),
        format!("// File: a.c\nint a;\n{delim}\n// File: b.c\nint b;\n"),
    )
    .unwrap();
    let out = forge(&["ingest", "--root", root.to_str().unwrap()], b"", &[]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let samples: Vec<serde_json::Value> =
        stdout_str(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(samples.len(), 2);
    assert_eq!(samples[0]["sample_idx"], 0);
    assert_eq!(samples[1]["sample_idx"], 1);
    assert_eq!(samples[0]["category"], "kernel");
    assert_eq!(samples[1]["source_file"], "b.c");
}
