use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use rwre_cli::commands::{run, Subcommand};
use rwre_cli::config::ExperimentConfig;

/// Random walks in low-disorder random environments.
#[derive(Parser, Debug)]
#[command(name = "rwre", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// TOML configuration; defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "RWRE_SEED")]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "RWRE_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("configuration error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            eprintln!("cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let start = Instant::now();
    let out = match run(cli.command, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let timing = format!("{{\n  \"subcommand\": \"{}\",\n  \"wall_clock_seconds\": {elapsed}\n}}\n", out.name);
    let written = out
        .write(&cli.out)
        .and_then(|_| std::fs::write(cli.out.join(format!("{}.timing.json", out.name)), timing));
    if let Err(e) = written {
        eprintln!("cannot write artifacts to {}: {e}", cli.out.display());
        return ExitCode::from(1);
    }
    for c in &out.checks {
        println!("{} [{}] {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    println!("artifacts written to {}", cli.out.display());
    if out.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
