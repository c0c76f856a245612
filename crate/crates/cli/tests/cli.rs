use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn phish(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phish")).args(args).output().expect("spawn phish")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn naive_example_is_phishing_in_phase1() {
    let eml = fixtures().join("naive.eml");
    let dns = fixtures().join("rules/dns.jsonl");
    let out = phish(&["analyze", eml.to_str().unwrap(), "--phase1-only", "--dns-fixture", dns.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("phishing") && text.contains("score=8"), "{text}");
}

#[test]
fn json_output_has_one_line_per_message() {
    let corpus = fixtures().join("rules/corpus.jsonl");
    let out = phish(&["analyze", corpus.to_str().unwrap(), "--phase1-only", "--json"]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 60);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(phish(&["analyze"]).status.code(), Some(2));
    assert_eq!(phish(&["evaluate"]).status.code(), Some(2));
    assert_eq!(phish(&["analyze", "x.eml", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(phish(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_one() {
    assert_eq!(phish(&["analyze", "/nonexistent/message.eml"]).status.code(), Some(1));
    let eml = fixtures().join("naive.eml");
    assert_eq!(phish(&["analyze", eml.to_str().unwrap(), "--mode", "no-such-mode"]).status.code(), Some(1));
}

#[test]
fn redact_reads_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_phish"))
        .args(["redact", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"Call 555-867-5309 or mail alice@clinic.org\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim_end(), "Call ***-***-5309 or mail a****e@clinic.org");
}

#[test]
fn roi_reports_default_operating_point() {
    let out = phish(&["roi"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("542.1x"), "{}", stdout(&out));
    let json = phish(&["roi", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn evaluate_reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let index = tmp.path().join("index");
    let corpus = fixtures().join("index/corpus.jsonl");
    let build = phish(&["index", "build", "--corpus", corpus.to_str().unwrap(), "--out", index.to_str().unwrap(), "--dimension", "256"]);
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));

    let dataset = fixtures().join("eval/corpus.jsonl");
    let dns = fixtures().join("eval/dns.jsonl");
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = phish(&[
            "evaluate",
            "--dataset",
            dataset.to_str().unwrap(),
            "--dns-fixture",
            dns.to_str().unwrap(),
            "--index",
            index.to_str().unwrap(),
            "--resamples",
            "200",
            "--permutations",
            "200",
            "--report",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let (a, b) = (run("a"), run("b"));
    for name in ["report.json", "report.md", "manifest.json", "predictions.jsonl"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}
