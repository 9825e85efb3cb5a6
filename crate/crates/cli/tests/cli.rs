use std::fs;
use std::process::{Command, Output};

fn qassert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qassert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_names_every_benchmark_and_bug() {
    let o = qassert(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in [
        "bell",
        "qft_harness",
        "cadd_harness",
        "cmodmul_harness",
        "shor15",
        "grover",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(name)),
            "{name} missing:\n{text}"
        );
    }
    assert!(text.contains("--bug wrong-inverse"));
}

#[test]
fn clean_and_bugged_exit_codes() {
    let o = qassert(&["run", "cadd_harness"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).ends_with("overall: pass\n"));

    let o = qassert(&["run", "cadd_harness", "--bug", "flipped-angles"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("fail"));
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(qassert(&["run", "no_such_thing"]).status.code(), Some(3));
    assert_eq!(
        qassert(&["run", "bell", "--bug", "nonsense"]).status.code(),
        Some(3)
    );
    assert_eq!(
        qassert(&["run", "bell", "--bug", "wrong-inverse"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        qassert(&["run", "bell", "--alpha", "1.5"]).status.code(),
        Some(3)
    );
    assert_eq!(
        qassert(&["run", "bell", "--shots", "0"]).status.code(),
        Some(3)
    );
    assert_eq!(
        qassert(&["run", "bell", "--dialect", "native"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn single_shot_is_indeterminate() {
    let o = qassert(&["run", "bell", "--shots", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn json_output_is_stable_across_thread_counts() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_qassert"))
            .args([
                "run",
                "cmodmul_harness",
                "--bug",
                "wrong-inverse",
                "--format",
                "json",
            ])
            .env("QASSERT_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert_eq!(one.status.code(), Some(1));
    assert_eq!(one.stdout, four.stdout);
    let v: serde_json::Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(v["status"], "fail");
    assert_eq!(v["bug"], "wrong-inverse");
    assert_eq!(v["verdicts"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_qassert"))
        .args(["run", "bell"])
        .env("QASSERT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn per_shot_rerun_matches_sampling() {
    let a = qassert(&["run", "grover", "--format", "json"]);
    let b = qassert(&["run", "grover", "--format", "json", "--per-shot-rerun"]);
    let strip = |o: &Output| {
        let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["mode"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn emitted_breakpoints_run_standalone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = qassert(&["run", "qft_harness", "--emit-breakpoints", d]);
    assert_eq!(o.status.code(), Some(0));
    let mut files: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert_eq!(files.len(), 3);
    for f in &files {
        assert_eq!(f.extension().unwrap(), "qa");
        let o = qassert(&["run", f.to_str().unwrap(), "--shots", "160"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }

    let qasm = tempfile::tempdir().unwrap();
    let o = qassert(&[
        "run",
        "shor15",
        "--emit-breakpoints",
        qasm.path().to_str().unwrap(),
        "--dialect",
        "qasm-subset",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let first = fs::read_to_string(qasm.path().join("breakpoint_01.qasm")).unwrap();
    assert!(first.starts_with("version 1\n"));
    assert!(first.ends_with("measure_all\n"));
}

#[test]
fn source_file_errors_carry_positions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.qa");
    fs::write(&path, "reg q 2\nh q[7]\nassert classical q 0\n").unwrap();
    let o = qassert(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("broken.qa:2:"), "{err}");
}

#[test]
fn oversized_program_is_a_resource_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.qa");
    fs::write(&path, "reg q 30\nh q[0]\nassert superposition q[0]\n").unwrap();
    let o = qassert(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}
