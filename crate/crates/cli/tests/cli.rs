//! End-to-end behaviour of the `rwre` binary.

use std::path::Path;
use std::process::{Command, Output};

fn rwre(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwre")).args(args).current_dir(dir).env_remove("RWRE_SEED").output().unwrap()
}

fn envelope(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap()).unwrap()
}

#[test]
fn kalikow_writes_an_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = rwre(&["kalikow", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let env = envelope(&dir.path().join("o"), "kalikow");
    assert_eq!(env["subcommand"], "kalikow");
    assert_eq!(env["seed"], 20240601);
    assert_eq!(env["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("o/kalikow.timing.json").exists());
}

#[test]
fn green_function_of_planar_simple_walk_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = rwre(&["green"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("recurrent kernel"));
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[velocity]\nn_walks = 0\n").unwrap();
    let out = rwre(&["velocity", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("typo.toml"), "[velocity]\nn_walk = 3\n").unwrap();
    let out = rwre(&["velocity", "--config", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rwre(&["velocity", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_comes_from_the_environment_unless_given() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed_env: &str, extra: &[&str], out: &str| {
        let mut args = vec!["torus-oracle", "--out", out];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_rwre"))
            .args(&args)
            .current_dir(dir.path())
            .env("RWRE_SEED", seed_env)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        envelope(&dir.path().join(out), "torus-oracle")["seed"].as_u64().unwrap()
    };
    assert_eq!(run("77", &[], "a"), 77);
    assert_eq!(run("77", &["--seed", "5"], "b"), 5);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "seed = 9\n[velocity]\nn_walks = 4\nn_steps = 2000\n").unwrap();
    for out in ["x", "y"] {
        let o = rwre(&["velocity", "--config", "c.toml", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("x"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".timing.json"))
        .collect();
    names.sort();
    assert!(names.contains(&"velocity.json".to_string()));
    for f in names {
        let a = std::fs::read(dir.path().join("x").join(&f)).unwrap();
        let b = std::fs::read(dir.path().join("y").join(&f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
}
