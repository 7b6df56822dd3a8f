//! Command-line driver. Every run writes its outputs plus a `manifest.json`
//! into the `--out` directory.

pub mod args;
pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::Path;
use std::time::Instant;

use clap::Parser;

use crate::data::write_atomic;
use crate::error::{DhmmError, Result};
use args::{Cli, Command};
use manifest::{digest_file, sha256_hex, FileDigest, RunConfig, RunManifest, MANIFEST_FILE};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DHMM_THREADS";

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, raw) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| DhmmError::invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| DhmmError::invalid(format!("cannot start worker threads: {e}")))
}

fn execute(cli: Cli, raw: Vec<String>) -> Result<i32> {
    let pool = thread_pool()?;
    let threads = pool.current_num_threads();
    pool.install(|| match &cli.command {
        Command::Replay(r) => replay(&r.manifest, &r.out, threads),
        cmd => {
            let config = resolve_config(cmd)?;
            let out = cmd.common().expect("non-replay commands take --out").out.clone();
            run_command(cmd, config, &out, raw, threads)
        }
    })
}

/// The config file (or defaults) with command-line flags applied.
fn resolve_config(cmd: &Command) -> Result<RunConfig> {
    let common = cmd.common().expect("non-replay commands take common flags");
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.train.seed = seed;
        config.toy.seed = seed;
    }
    let model = match cmd {
        Command::Train(a) => Some(&a.model),
        Command::Sweep(a) => Some(&a.model),
        _ => None,
    };
    if let Some(m) = model {
        if let Some(alpha) = m.alpha {
            config.train.alpha = alpha;
        }
        if let Some(alpha_a) = m.alpha_a {
            config.train.alpha_a = alpha_a;
        }
    }
    config.train.validate()?;
    Ok(config)
}

fn run_command(cmd: &Command, config: RunConfig, out: &Path, args: Vec<String>, threads: usize) -> Result<i32> {
    if !out.is_dir() {
        return Err(DhmmError::invalid(format!(
            "output directory {} does not exist",
            out.display()
        )));
    }
    let start = Instant::now();
    let outcome = match cmd {
        Command::Synth(_) => commands::synth(&config)?,
        Command::Train(a) => commands::train(a, &config)?,
        Command::Label(a) => commands::label(a)?,
        Command::Eval(a) => commands::eval(a)?,
        Command::Sweep(a) => commands::sweep(a, &config)?,
        Command::Replay(_) => unreachable!("replay is resolved before dispatch"),
    };
    let mut outputs = Vec::with_capacity(outcome.outputs.len());
    for (name, bytes) in &outcome.outputs {
        write_atomic(&out.join(name), bytes)?;
        outputs.push(FileDigest {
            path: name.clone(),
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        args,
        seed: config.train.seed,
        config,
        dataset_digest: outcome.dataset_digest,
        inputs: outcome.inputs,
        outputs,
        threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.save(&out.join(MANIFEST_FILE))?;
    if outcome.failures > 0 {
        eprintln!("error: {} work item(s) failed; see the status column", outcome.failures);
        return Ok(1);
    }
    Ok(0)
}

/// Re-runs a recorded command with its recorded effective configuration,
/// after checking that every input still has the recorded digest.
fn replay(manifest_path: &Path, out: &Path, threads: usize) -> Result<i32> {
    let manifest = RunManifest::load(manifest_path)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest was written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    for input in &manifest.inputs {
        let now = digest_file(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            return Err(DhmmError::invalid(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let argv = std::iter::once("dhmm".to_string()).chain(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| DhmmError::invalid(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(DhmmError::invalid("a replay manifest cannot itself be replayed"));
    }
    run_command(&cli.command, manifest.config, out, manifest.args, threads)
}
