//! End-to-end runs of the compiled binary: exit codes, output files, and
//! flag handling.

use std::path::Path;
use std::process::Command;

fn run(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tailsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn chi_run_succeeds_and_prints_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"chi\"\n[preset]\nname = \"prime_q\"\nq = 5\n");
    let out = run(&["chi", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("chi=-0.238954569"), "{stdout}");
    assert!(dir.path().join("manifest.txt").exists());
    assert!(dir.path().join("results.txt").exists());
}

#[test]
fn flagged_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = \"tail\"\ncount = 500\n[preset]\nname = \"single_contraction\"\n",
    );
    let out = run(&["tail", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"chi\"\nbogus = 1\n[preset]\nname = \"bernoulli\"\n");
    let out = run(&["chi", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn unknown_kind_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"chi\"\n[preset]\nname = \"bernoulli\"\n");
    let out = run(&["frobnicate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn positional_kind_and_seed_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = \"chi\"\nseed = 0\ncount = 100\n[preset]\nname = \"bernoulli\"\n",
    );
    let out = run(&["sample", "--config", &cfg, "--seed", "9"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("experiment=sample"));
    assert!(manifest.contains("seed=9"));
    assert!(dir.path().join("samples.csv").exists());
}

#[test]
fn threads_flag_never_changes_outputs() {
    let mut bodies = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "experiment = \"sample\"\ncount = 3000\nseed = 5\n[preset]\nname = \"prime_q\"\nq = 7\n",
        );
        let out = run(&["sample", "--config", &cfg, "--threads", threads], dir.path());
        assert_eq!(out.status.code(), Some(0));
        bodies.push(std::fs::read_to_string(dir.path().join("samples.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}
