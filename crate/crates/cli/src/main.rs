//! `combforge` command-line front end.
//!
//! `combforge run --config run.json` executes one task and writes its data
//! files plus `manifest.json` into the output directory. `combforge verify`
//! runs the acceptance suite and prints one line per criterion.
//!
//! Exit codes: 0 on success, 1 on configuration errors, 2 on numerical
//! failures or failed criteria. Errors are printed to stderr as JSON.

mod config;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, RunConfig, Task};
use tasks::{sha256_hex, Outputs, TaskRecord, VerificationFailed};

#[derive(Parser)]
#[command(name = "combforge", version, about = "Stationary comb solutions and their stability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for the eigenvalue sweeps.
    #[arg(long, global = true, env = "COMBFORGE_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the task described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the acceptance criteria, optionally with a config that sets
    /// parameters, branch, seed and the list of criteria.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn default_verify_config() -> RunConfig {
    RunConfig {
        params: combforge::verify::VerifyConfig::default().params,
        grid: None,
        task: Task::Verify,
        options: Default::default(),
        output_dir: None,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let key = if e.kind() == clap::error::ErrorKind::ValueValidation
                || e.kind() == clap::error::ErrorKind::InvalidValue
            {
                "threads"
            } else {
                "arguments"
            };
            report_error("config", key, &e.to_string());
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                report_error("config", &c.key, &c.message);
                ExitCode::from(1)
            } else if let Some(v) = e.downcast_ref::<VerificationFailed>() {
                eprintln!(
                    "{}",
                    json!({"error": "verification", "criterion": v.id, "title": v.title, "message": v.to_string()})
                );
                ExitCode::from(2)
            } else {
                let kind = if e.downcast_ref::<combforge::Error>().is_some() { "numerical" } else { "runtime" };
                eprintln!("{}", json!({"error": kind, "message": format!("{e:#}")}));
                ExitCode::from(2)
            }
        }
    }
}

fn report_error(kind: &str, key: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "key": key, "message": message}));
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError::new("threads", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError::new("threads", e.to_string()))?;
    }
    let (cfg, config_path) = match &cli.command {
        Command::Run { config } => (RunConfig::load(config)?, Some(config.clone())),
        Command::Verify { config: Some(config) } => {
            let mut c = RunConfig::load(config)?;
            c.task = Task::Verify;
            (c, Some(config.clone()))
        }
        Command::Verify { config: None } => (default_verify_config(), None),
    };
    let out_dir = cli
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("combforge-out"));

    let started = chrono::Utc::now();
    let clock = Instant::now();
    let mut out = Outputs::new(&out_dir)?;
    let mut record = TaskRecord::default();
    if let Some(p) = &config_path {
        let bytes = std::fs::read(p)?;
        record.inputs.insert(p.display().to_string(), sha256_hex(&bytes));
    }
    let outcome = tasks::execute(&cfg, &mut out, &mut record);
    let manifest = json!({
        "tool": "combforge",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "started_at": started.to_rfc3339(),
        "finished_at": chrono::Utc::now().to_rfc3339(),
        "wall_seconds": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "inputs": record.inputs,
        "outputs": out.digests,
        "results": record.results,
        "status": if outcome.is_ok() { "ok" } else { "failed" },
        "error": outcome.as_ref().err().map(|e| format!("{e:#}")),
    });
    let text = combforge::io::to_json(&manifest)?;
    std::fs::write(out.dir().join("manifest.json"), text)?;
    outcome
}
