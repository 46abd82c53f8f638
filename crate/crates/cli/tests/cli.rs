use std::fs;
use std::process::{Command, Output};

fn qselftest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qselftest"))
        .args(args)
        .env_remove("SELFTEST_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&qselftest(&["--bogus"])), 2);
    assert_eq!(code(&qselftest(&["selftest", "run", "--w", "0"])), 2);
    assert_eq!(code(&qselftest(&["selftest", "run", "--prover", "nobody"])), 2);
    assert_eq!(code(&qselftest(&["analyze", "--model", "random=1", "--kind", "dimtest"])), 2);
    assert_eq!(code(&qselftest(&["--help"])), 0);
}

#[test]
fn bad_seed_variable_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_qselftest"))
        .args(["selftest", "run", "--sessions", "10"])
        .env("SELFTEST_SEED", "twelve")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn dimtest_run_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = qselftest(&[
        "dimtest", "run", "--n", "2", "--w", "4", "--sessions", "1000", "--seed", "42",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let saved: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert_eq!(saved["sessions"], 1000);
    let lines = fs::read_to_string(dir.path().join("transcripts.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1000);
}

#[test]
fn selftest_runs_for_each_prover() {
    for prover in ["honest", "classical", "bitflip=0.1", "wrongbasis"] {
        let out = qselftest(&["selftest", "run", "--n", "1", "--w", "3", "--sessions", "200", "--prover", prover]);
        assert_eq!(code(&out), 0, "{prover}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn entcf_check_passes() {
    let out = qselftest(&["entcf-check", "--w", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let out = qselftest(&["entcf-check", "--backend", "toylwe", "--w", "2", "--keys", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn analyze_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = qselftest(&[
        "analyze", "--model", "random=3", "--key-draws", "1", "--report", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert_eq!(report["violations"], serde_json::json!([]));
    assert_eq!(report["n"], 1);

    let path = dir.path().join("classical.json");
    let out = qselftest(&[
        "analyze", "--kind", "dimtest", "--model", "classical", "--key-draws", "1", "--report", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert_eq!(report["dimension"]["rank_check"]["rank"], 1);
}
