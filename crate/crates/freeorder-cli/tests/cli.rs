//! End-to-end runs of the `freeorder` binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_freeorder"));
    cmd.env_remove("FREEORDER_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn entropy_of_four_distinct_orders_is_two_bits() {
    let dir = scratch("entropy");
    let path = dir.join("four.permset");
    fs::write(&path, "PERMSET 1 n=3 count=4\n1 2 3\n2 1 3\n3 2 1\n1 3 2\n").unwrap();
    assert_eq!(stdout(&run(&["entropy", path.to_str().unwrap()])).trim(), "2.0");
}

#[test]
fn verify_family_reports_collisions_and_balance() {
    let dir = scratch("family");
    let fam = dir.join("fam.csv");
    stdout(&run(&["build-dimred", "--n", "100", "--ell-dim", "11", "--out", fam.to_str().unwrap()]));
    let report: serde_json::Value = serde_json::from_str(&stdout(&run(&["verify-family", fam.to_str().unwrap()]))).unwrap();
    assert_eq!(report["q"], 11);
    assert_eq!(report["d"], 1);
    assert_eq!(report["max_collisions"], 1);
    assert_eq!(report["preimage_min"], 9);
    assert_eq!(report["preimage_max"], 10);
    assert_eq!(report["ok"], true);
}

#[test]
fn a_tampered_family_fails_verification_with_exit_one() {
    let dir = scratch("tampered");
    let fam = dir.join("fam.csv");
    stdout(&run(&["build-dimred", "--n", "100", "--ell-dim", "11", "--out", fam.to_str().unwrap()]));
    let text = fs::read_to_string(&fam).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    // Give the second element the first one's images, so every function collides.
    lines[2] = lines[1].clone();
    fs::write(&fam, lines.join("\n") + "\n").unwrap();
    let out = run(&["verify-family", fam.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn construct_lift_and_eval_are_reproducible() {
    let dir = scratch("flow");
    let path = |f: &str| dir.join(f).to_str().unwrap().to_owned();
    stdout(&run(&["construct-1sec", "--ell-dim", "7", "--k", "2", "--out", &path("low.ps"), "--log", &path("trace.jsonl")]));
    assert!(fs::read_to_string(path("trace.jsonl")).unwrap().lines().count() > 1);
    stdout(&run(&["build-dimred", "--n", "100", "--ell-dim", "7", "--out", &path("fam.csv")]));
    stdout(&run(&["lift", "--low", &path("low.ps"), "--family", &path("fam.csv"), "--out", &path("lifted.ps")]));
    assert!(fs::read_to_string(path("lifted.ps")).unwrap().starts_with("PERMSET 1 n=100 "));

    let eval = |threads: &str| {
        stdout(&run(&["--threads", threads, "eval", "--orders", &path("lifted.ps"), "--trials", "2000", "--seed", "11"]))
    };
    let first = eval("1");
    assert_eq!(first, eval("1"));
    assert_eq!(first, eval("4"));
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(report["schema"], "EVAL-1");
    assert_eq!(report["n"], 100);
}

#[test]
fn selfcheck_passes() {
    let text = stdout(&run(&["selfcheck"]));
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.ends_with(": PASS")), "{text}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "--uniform", "10", "--trials", "5"]).status.code(), Some(2));
    assert_eq!(run(&["entropy", "/nonexistent/file"]).status.code(), Some(2));
    assert_eq!(run(&["analysis", "f", "--k", "3", "--m", "4"]).status.code(), Some(2));
}

#[test]
fn analysis_prints_exact_values() {
    assert_eq!(stdout(&run(&["analysis", "f", "--k", "10", "--m", "4"])).trim(), "2509/6300 0.39825396825396825");
    assert_eq!(stdout(&run(&["analysis", "argmax", "--k", "100"])).trim(), "37");
}
