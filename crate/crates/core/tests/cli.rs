//! Command-line surface: subcommands, exit codes and the output-directory
//! environment variable.

use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qdcascade"));
    c.env_remove("QDCASCADE_OUT");
    c
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn list_prints_every_scenario_with_its_figure() {
    let o = bin().arg("list").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().all(|l| l.contains("Fig.") || l.starts_with("budget")), "{text}");
}

#[test]
fn validate_echoes_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "scenario = \"budget\"\n").unwrap();
    let o = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("r_herald = 90.0"), "{text}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "scenario = \"budget\"\n[budget]\nr_heral = 1.0\n").unwrap();
    let o = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stderr).unwrap().contains("r_heral"));
}

#[test]
fn misspelled_scenario_exits_2_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["run", "--scenario", "budgte", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stderr).unwrap().contains("did you mean budget"));
}

#[test]
fn bad_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--scenario", "budget", "--set", "budget.r_herald=-3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stderr).unwrap().contains("budget.r_herald"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = bin().args(["run", "--scenario", "budget", "--out"]).arg(blocker.join("sub")).output().unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn run_writes_to_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--scenario", "budget", "--seed", "5", "--set", "budget.chain.reading=diagonal_only"])
        .env("QDCASCADE_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 5);
    assert_eq!(summary["reading"], "diagonal_only");
    assert!(dir.path().join("resolved_config.toml").exists());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "scenario = \"budget\"\nmaster_seed = 1\n").unwrap();
    let out = dir.path().join("out");
    let o = bin().arg("run").arg("--config").arg(&path).args(["--seed", "9", "--out"]).arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    let resolved = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("master_seed = 9"), "{resolved}");
}
