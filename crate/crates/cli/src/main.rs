//! `specdisc --config run.json`: runs one subcommand described by a JSON
//! config and writes CSV/DAT outputs plus `manifest.json` into the output
//! directory.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser};
use serde::Serialize;

use commands::{Context, Failure};
use config::{ConfigError, Mode, RunConfig};
use output::{FileEntry, Outputs};

#[derive(Debug, Parser)]
#[command(
    name = "specdisc",
    version,
    about = "Discreteness criteria and their building blocks, driven by a JSON config"
)]
struct Cli {
    /// JSON config naming the subcommand and its parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for randomized subcommands; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Arithmetic for rearrange, extremal and choquet; overrides the config.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Worker threads; overrides the config (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    mode: &'static str,
    seed: Option<u64>,
    threads: Option<usize>,
    config: serde_json::Value,
    wall_time_s: f64,
    files: &'a [FileEntry],
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn usage() -> ExitCode {
    eprintln!("{}", Cli::command().render_help());
    ExitCode::from(EXIT_CONFIG)
}

fn config_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config else {
        return usage();
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return config_error(&format!("cannot read {}: {e}", path.display())),
    };
    let cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(ConfigError::Empty) => return usage(),
        Err(ConfigError::Invalid(m)) => return config_error(&m),
    };
    let seed = cli.seed.or(cfg.seed);
    let mode = cli.mode.or(cfg.mode).unwrap_or(Mode::Float);
    let threads = cli.threads.or(cfg.threads);
    let out_dir = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    if let Some(n) = threads {
        if n == 0 {
            return config_error("threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let mut outputs = match Outputs::create(&out_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", out_dir.display());
            return ExitCode::from(EXIT_RUNTIME);
        }
    };

    let start = Instant::now();
    let mut ctx = Context { seed, mode, out: &mut outputs, summary: Vec::new() };
    match commands::run(&cfg, &mut ctx) {
        Ok(()) => {}
        Err(Failure::Config(m)) => return config_error(&m),
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let summary = std::mem::take(&mut ctx.summary);
    let manifest = Manifest {
        tool: "specdisc",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cfg.subcommand.name(),
        mode: match mode {
            Mode::Float => "float",
            Mode::Rational => "rational",
        },
        seed,
        threads,
        config: serde_json::from_str(&text).unwrap_or(serde_json::Value::Null),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: outputs.files(),
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = std::fs::write(outputs.dir().join("manifest.json"), json) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    for line in summary {
        println!("{line}");
    }
    println!("wrote {} files to {}", outputs.files().len() + 1, outputs.dir().display());
    ExitCode::SUCCESS
}
