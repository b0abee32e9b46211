use std::process::Command;

use scalar_eh::cli::parse_header;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scalar-eh"))
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().args(["kernels", "--grid", "8"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["nosuch"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn numerical_failure_exits_two_and_removes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let dump = dir.path().join("h.csv");
    let status = bin()
        .args(["oracle", "--sites", "64", "--interval", "12", "--precision", "64"])
        .arg("--out")
        .arg(&out)
        .arg("--dump")
        .arg(&dump)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists() && !dump.exists());
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("ks{threads}.csv"));
        let status = bin()
            .env("SCALAR_EH_THREADS", threads)
            .args(["kernels", "--kind", "ks", "--mass", "0.4", "--grid", "12", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let text = std::fs::read_to_string(&out).unwrap();
        let cfg = parse_header(&text).unwrap();
        assert_eq!(cfg.command.common().out, out);
        bodies.push(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n"));
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn corrections_report_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin().args(["corrections", "--mass", "0.01", "--check", "spectral", "--grid", "6", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["report"]["pass"], serde_json::json!(true));
}
