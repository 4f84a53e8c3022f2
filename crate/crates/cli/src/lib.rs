//! The `kd` command-line tool as a library, so tests can drive it in-process.

pub mod args;
mod commands;
pub mod datadir;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::Result;
use clap::Parser;
use kd_core::error::{CheckpointError, DataError, Error, EvalError, LossError, NnError, TrainError};
use log::error;

use args::{Cli, Command};
use commands::Ctx;
use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

/// Invalid or missing command-line input discovered after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Appends `--key value` for every `key = value` line of the `--config` file
/// whose flag is not already on the command line.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, UsageError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strs.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| UsageError(format!("--config {path}: {e}")))?;
    let given = |flag: &str| strs.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    let mut out = args;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--config {path}: line {}: expected key=value", n + 1)))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        if given(&flag) {
            continue;
        }
        match value.trim() {
            "true" => out.push(flag.into()),
            "false" => {}
            v => {
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

/// Exit status for an error, by the first recognized cause in its chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Data(_) | Error::Checkpoint(_) | Error::Eval(_) => EXIT_DATA,
                Error::Train(t) => train_code(t),
                Error::Nn(_) | Error::Loss(_) => EXIT_TRAINING,
                Error::SweepCell { .. } => continue,
            };
        }
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            return train_code(t);
        }
        if cause.is::<DataError>() || cause.is::<CheckpointError>() || cause.is::<EvalError>() || cause.is::<std::io::Error>() {
            return EXIT_DATA;
        }
        if cause.is::<NnError>() || cause.is::<LossError>() {
            return EXIT_TRAINING;
        }
    }
    EXIT_DATA
}

fn train_code(e: &TrainError) -> i32 {
    match e {
        TrainError::Data(_) => EXIT_DATA,
        TrainError::Config(_) => EXIT_USAGE,
        _ => EXIT_TRAINING,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Synth(_) => "synth",
        Command::Prepare(_) => "prepare",
        Command::TrainTeacher(_) => "train-teacher",
        Command::ExportSoftLabels(_) => "export-soft-labels",
        Command::Distill(_) => "distill",
        Command::Evaluate(_) => "evaluate",
        Command::Sweep(_) => "sweep",
        Command::Bench(_) => "bench",
    };
    let config = serde_json::to_value(cli)?;
    let mut ctx = Ctx {
        seed: cli.seed,
        threads: cli.threads.max(1),
        manifest: RunManifest::new(name, config, cli.seed, cli.threads),
    };
    match &cli.command {
        Command::Synth(a) => commands::synth(&mut ctx, a),
        Command::Prepare(a) => commands::prepare_cmd(&mut ctx, a),
        Command::TrainTeacher(a) => commands::train_teacher_cmd(&mut ctx, a),
        Command::ExportSoftLabels(a) => commands::export(&mut ctx, a),
        Command::Distill(a) => commands::distill(&mut ctx, a),
        Command::Evaluate(a) => commands::evaluate_cmd(&mut ctx, a),
        Command::Sweep(a) => commands::sweep(&mut ctx, a),
        Command::Bench(a) => commands::bench(&mut ctx, a),
    }
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            error!("{e:#}");
            code
        }
    }
}
