//! End-to-end tests of the `edbench` binary: exit codes, JSON output, and
//! the file side effects of every subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn edbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edbench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn solve_bundled_700_prints_solution_json() {
    let out = edbench(&["solve", "--pd", "700"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json = stdout_json(&out);
    let cost = json["cost"].as_f64().unwrap();
    assert!((cost - 18077.53).abs() < 0.5, "cost {cost}");
    assert_eq!(json["dispatch"]["pg"].as_array().unwrap().len(), 19);
}

#[test]
fn solve_infeasible_demand_exits_1_naming_bounds() {
    let out = edbench(&["solve", "--pd", "100"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("652"), "stderr: {}", stderr(&out));
}

#[test]
fn solve_at_max_demand_returns_pmax_vector() {
    let out = edbench(&["solve", "--pd", "6515"]);
    assert!(out.status.success());
    let json = stdout_json(&out);
    let pg = json["dispatch"]["pg"].as_array().unwrap();
    assert_eq!(pg[0].as_f64().unwrap(), 505.0);
    assert_eq!(pg[18].as_f64().unwrap(), 79.0);
}

#[test]
fn solve_include_constants_shifts_cost() {
    let base = stdout_json(&edbench(&["solve", "--pd", "700"]));
    let with = stdout_json(&edbench(&["solve", "--pd", "700", "--include-constants"]));
    let delta = with["cost"].as_f64().unwrap() - base["cost"].as_f64().unwrap();
    assert_eq!(delta, 2730.0);
}

#[test]
fn solve_accepts_explicit_system_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.csv");
    std::fs::write(&path, "bus,p_min,p_max,a,b,c\n1,0,100,0.01,5,0\n").unwrap();
    let out = edbench(&["solve", "--system", path.to_str().unwrap(), "--pd", "50"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json = stdout_json(&out);
    assert_eq!(json["dispatch"]["pg"][0].as_f64().unwrap(), 50.0);
}

#[test]
fn prompt_evolutionary_writes_instruction_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prompt.txt");
    let out = edbench(&[
        "prompt",
        "--strategy",
        "evolutionary",
        "--pd",
        "727",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("generate 10 candidate dispatch sets"));
    assert!(text.contains("Do not include any code"));
    let json = stdout_json(&out);
    assert_eq!(json["strategy"].as_str().unwrap(), "evolutionary");
    assert!(json["fingerprint"].as_str().unwrap().len() == 64);
}

#[test]
fn prompt_non_evolutionary_carries_scaling_phrase() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prompt.txt");
    let out = edbench(&[
        "prompt",
        "--strategy",
        "non-evolutionary",
        "--pd",
        "727",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("maintaining proportionality and logical scaling"));
    assert!(text.contains("PD = 727"));
}

#[test]
fn prompt_above_pd_max_exits_1() {
    let out = edbench(&["prompt", "--strategy", "evolutionary", "--pd", "7000"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ga_prints_result_json() {
    let out = edbench(&["ga", "--pd", "727", "--generations", "20", "--seed", "7"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json = stdout_json(&out);
    assert!(json["best_cost"].as_f64().unwrap() > 18000.0);
    assert_eq!(json["history"].as_array().unwrap().len(), 20);
}

#[test]
fn ga_prompt_literal_runs_one_generation() {
    let out = edbench(&["ga", "--pd", "727", "--prompt-literal"]);
    assert!(out.status.success());
    let json = stdout_json(&out);
    assert_eq!(json["history"].as_array().unwrap().len(), 1);
}

fn write_bench_config(dir: &Path, replay: &Path, out_dir: &Path) -> PathBuf {
    let config = format!(
        r#"
backend = "replay"
replay_path = "{}"
output_dir = "{}"

[[models]]
name = "O3-mini-high"
[[models]]
name = "O3-mini"
[[models]]
name = "O1"
[[models]]
name = "DeepSeek R1"
"#,
        replay.display(),
        out_dir.display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn bench_demo_store_writes_all_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_bench_config(dir.path(), &repo_path("demo/replay.jsonl"), &out_dir);
    let out = edbench(&["bench", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for file in [
        "report_non-evolutionary.csv",
        "report_non-evolutionary.md",
        "report_evolutionary.csv",
        "report_evolutionary.md",
        "violations.csv",
        "dispatch_series.csv",
        "results.json",
        "run_manifest.json",
    ] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let summary = stdout_json(&out);
    let groups = summary["summaries"].as_array().unwrap();
    assert_eq!(groups.len(), 8);
    for g in groups {
        assert_eq!(g["scored"].as_u64().unwrap(), 10);
        assert_eq!(g["failed"].as_u64().unwrap(), 0);
        assert_eq!(g["mean_rel_error_pct"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn bench_missing_replay_store_exits_1_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let config = write_bench_config(dir.path(), &missing, &dir.path().join("out"));
    let out = edbench(&["bench", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("nowhere.jsonl"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn bench_live_without_credential_exits_2_before_any_call() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("live.toml");
    std::fs::write(
        &config_path,
        r#"
backend = "live"
output_dir = "out"

[[models]]
name = "O1"
endpoint = "http://127.0.0.1:9/v1/chat/completions"
credential_env = "EDBENCH_CLI_TEST_UNSET_KEY"
"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_edbench"))
        .args(["bench", "--config", config_path.to_str().unwrap()])
        .env_remove("EDBENCH_CLI_TEST_UNSET_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("EDBENCH_CLI_TEST_UNSET_KEY"));
}

#[test]
fn report_reemits_from_saved_results() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_bench_config(dir.path(), &repo_path("demo/replay.jsonl"), &out_dir);
    assert!(edbench(&["bench", "--config", config.to_str().unwrap()])
        .status
        .success());

    let second = dir.path().join("again");
    let results = out_dir.join("results.json");
    let out = edbench(&[
        "report",
        "--results",
        results.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let a = std::fs::read(out_dir.join("violations.csv")).unwrap();
    let b = std::fs::read(second.join("violations.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_flag_exits_2() {
    let out = edbench(&["solve", "--pd", "700", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_subcommand_flags() {
    for sub in ["solve", "prompt", "ga", "bench", "report"] {
        let out = edbench(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
    }
    let solve_help = String::from_utf8_lossy(&edbench(&["solve", "--help"]).stdout).into_owned();
    assert!(solve_help.contains("--pd"));
    assert!(solve_help.contains("--include-constants"));
    assert!(solve_help.contains("--system"));
}
