//! Command-line front end for `warpreg`.
//!
//! Every verb resolves its flags and configuration files into a [`Job`],
//! runs it, and records the job in `manifest.json` beside its outputs so that
//! `warpreg replay` can reproduce the run.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when the command
//! completed but some curves failed numerically.

pub mod args;
pub mod commands;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use warpreg::io::{parse_dataset_config, parse_registration_config};
use warpreg::{DatasetConfig, RegistrationConfig};

use args::{Cli, Command, RegistrationArgs};
pub use commands::Outcome;
pub use manifest::{Job, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "WARPREG_THREADS";

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("cannot resolve {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn dataset_config(path: Option<&Path>, seed: Option<u64>) -> Result<DatasetConfig> {
    let mut cfg = match path {
        Some(p) => parse_dataset_config(&read_text(p)?)
            .with_context(|| format!("invalid dataset config {}", p.display()))?,
        None => DatasetConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn registration_config(a: &RegistrationArgs) -> Result<RegistrationConfig> {
    let mut cfg = match &a.config {
        Some(p) => parse_registration_config(&read_text(p)?)
            .with_context(|| format!("invalid registration config {}", p.display()))?,
        None => RegistrationConfig::default(),
    };
    if let Some(n) = a.basis_order {
        cfg.basis = cfg.basis.with_size(n).context("invalid --basis-order")?;
    }
    if let Some(k) = a.warp_coeffs {
        cfg.warp_basis = cfg.warp_basis.with_size(k).context("invalid --warp-coeffs")?;
    }
    if let Some(l) = a.lambda {
        cfg.objective.lambda = l;
    }
    if let (Some(s), Some(ms)) = (a.seed, cfg.solver.multistart.as_mut()) {
        ms.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Turns parsed arguments into a job and its output directory.
pub fn resolve(command: &Command) -> Result<(Job, PathBuf)> {
    Ok(match command {
        Command::Simulate(a) => (
            Job::Simulate { config: dataset_config(a.config.as_deref(), a.seed)? },
            absolute(&a.out)?,
        ),
        Command::Register(a) => (
            Job::Register {
                curves: absolute(&a.curves)?,
                reference: a.reference,
                config: registration_config(&a.registration)?,
            },
            absolute(&a.out)?,
        ),
        Command::SelectRef(a) => (
            Job::SelectRef {
                curves: absolute(&a.curves)?,
                reference: a.reference,
                config: registration_config(&a.registration)?,
            },
            absolute(&a.out)?,
        ),
        Command::Evaluate(a) => {
            let run = absolute(&a.run)?;
            let out = match &a.out {
                Some(o) => absolute(o)?,
                None => run.clone(),
            };
            let truth = a.truth.as_deref().map(absolute).transpose()?;
            (Job::Evaluate { run, truth, sweep: a.sweep }, out)
        }
        Command::Replay(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let out = match &a.out {
                Some(o) => absolute(o)?,
                None => m.output,
            };
            (m.job, out)
        }
    })
}

/// Runs a job and writes its manifest.
pub fn run_job(job: &Job, out: &Path) -> Result<Outcome> {
    let start = Instant::now();
    let outcome = commands::execute(job, out)?;
    RunManifest {
        job: job.clone(),
        output: out.to_path_buf(),
        seed: job.seed(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        duration_secs: start.elapsed().as_secs_f64(),
    }
    .write(out)?;
    Ok(outcome)
}

/// Applies the thread cap from the environment to the global pool.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot configure the thread pool")
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = configure_threads()
        .and_then(|_| resolve(&cli.command))
        .and_then(|(job, out)| run_job(&job, &out));
    match result {
        Ok(o) if o.partial_failure => EXIT_PARTIAL,
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}
