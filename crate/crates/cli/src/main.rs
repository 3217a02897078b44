//! `nmsse <experiment> --config <path>`: runs one experiment and writes CSV
//! tables plus a JSON manifest. Exit status is 0 when every built-in check
//! passes, 1 when a check or the run fails, and 2 for usage or config errors.

mod error;
mod experiments;
mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use nmsse::config::{parse_config, ExperimentConfig, OutputFormat};

use crate::error::CliError;
use crate::experiments::{Experiment, Outcome};
use crate::manifest::Manifest;

const DEFAULT_OUT_DIR: &str = "nmsse-out";

#[derive(Debug, Parser)]
#[command(name = "nmsse", version, about = "Run stochastic Schrödinger equation experiments")]
struct Args {
    experiment: Experiment,
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `ensemble.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `ensemble.n_trajectories`.
    #[arg(long)]
    trajectories: Option<usize>,
}

fn load_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = parse_config(&text).map_err(CliError::Config)?;
    if let Some(seed) = args.seed {
        config.ensemble.master_seed = seed;
    }
    if let Some(n) = args.trajectories {
        config.ensemble.n_trajectories = n;
    }
    config.validate().map_err(CliError::Config)?;
    Ok(config)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Output { path: path.display().to_string(), source })
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("nmsse".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest_format".to_string(), "1".to_string()),
    ])
}

fn emit(args: &Args, config: &ExperimentConfig, outcome: Outcome, started: Instant) -> Result<bool, CliError> {
    let dir = args
        .out
        .clone()
        .or_else(|| config.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir).map_err(|source| CliError::Output { path: dir.display().to_string(), source })?;

    let mut outputs = Vec::new();
    if config.output.formats.contains(&OutputFormat::Csv) {
        for (name, body) in &outcome.tables {
            let path = dir.join(name);
            write_file(&path, body)?;
            outputs.push(path);
        }
    }
    let passed = outcome.checks.iter().all(|c| c.passed);
    for c in &outcome.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{verdict}: {} ({})", c.name, c.detail);
    }
    if config.output.formats.contains(&OutputFormat::Json) {
        let mut timings = outcome.timings;
        timings.insert("wall_seconds".into(), started.elapsed().as_secs_f64());
        let path = dir.join("manifest.json");
        outputs.push(path.clone());
        let manifest = Manifest {
            experiment: args.experiment.name().to_string(),
            seed: config.ensemble.master_seed,
            config: config.serialize(),
            checks: outcome.checks,
            timings,
            versions: versions(),
            outputs,
            passed,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_file(&path, json.as_bytes())?;
    }
    Ok(passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let started = Instant::now();
    let result = load_config(&args).and_then(|config| {
        let outcome = experiments::run(args.experiment, &config)?;
        emit(&args, &config, outcome, started)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
