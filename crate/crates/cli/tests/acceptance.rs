//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
//! criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rwre_cli::acceptance::{determinism_config, CriterionResult, CRITERIA};

const SEED: u64 = 20_240_601;

/// Runs the installed binary twice per subcommand and compares every artifact
/// except the wall-clock sidecar.
fn binary_reruns_identical(dir: &Path) -> Result<usize, String> {
    let cfg = determinism_config(SEED);
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, toml::to_string(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let commands = ["velocity", "invariant", "kalikow", "polycond", "torus-oracle"];
    for cmd in commands {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.join(format!("{cmd}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_rwre"))
                .args([cmd, "--config"])
                .arg(&cfg_path)
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{cmd} exited with {}", status.status));
            }
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
                .map_err(|e| e.to_string())?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| !p.to_string_lossy().ends_with(".timing.json"))
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
                .collect();
            files.sort();
            outputs.push(files);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{cmd} artifacts differ between runs"));
        }
    }
    Ok(commands.len())
}

fn main() -> ExitCode {
    let mut results: Vec<CriterionResult> = Vec::new();
    for criterion in CRITERIA {
        let start = Instant::now();
        let mut r = criterion(SEED);
        if r.id == 9 {
            let dir = tempfile::tempdir().expect("temporary directory");
            match binary_reruns_identical(dir.path()) {
                Ok(n) => r.summary.push_str(&format!("; binary reruns identical for {n} subcommands")),
                Err(e) => {
                    r.passed = false;
                    r.summary.push_str(&format!("; binary rerun check failed: {e}"));
                }
            }
        }
        println!("{} ({:.1}s)", r.line(), start.elapsed().as_secs_f64());
        results.push(r);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
