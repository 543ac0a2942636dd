//! The `affect` command-line tool.
//!
//! [`run`] parses arguments, merges an optional `key = value` config file
//! underneath them and dispatches to one of the `cmd_*` functions. Errors map
//! to stable exit codes, see [`exit_code`].

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use affect_core::{Error, Variant};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub mod commands;
pub mod config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NO_LABELS: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;
pub const EXIT_RULE_PARSE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "affect", version, about = "Multi-task affect recognition on expression embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Seed for data generation, initialisation and batch order
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// streaming | parallel
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Embedding adapter layer: on | off
    #[arg(long, global = true, value_parser = parse_switch)]
    pub adapter: Option<bool>,
    /// `key = value` file of default flag values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got `{s}`")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground-truth sidecar
    Synth(commands::SynthArgs),
    /// Train a network and write a checkpoint
    Train(commands::TrainArgs),
    /// Score a checkpoint on a labelled dataset
    Eval(commands::EvalArgs),
    /// K-fold cross-validation
    Kfold(commands::KfoldArgs),
    /// Finite-difference check of the network gradients
    Gradcheck(commands::GradcheckArgs),
    /// Fill missing CE labels from AU labels with a rule table
    Pseudo(commands::PseudoArgs),
}

/// The clap command with repeated flags resolving to the last occurrence,
/// which is what lets command-line flags override config-file values.
pub fn clap_command() -> clap::Command {
    Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::NoLabels(_) => EXIT_NO_LABELS,
        Error::Checkpoint(_) | Error::CheckpointMismatch(_) => EXIT_CHECKPOINT,
        Error::RuleParse { .. } => EXIT_RULE_PARSE,
        _ => EXIT_FAILURE,
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config::merge_config(&clap_command(), args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let matches = match clap_command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_FAILURE;
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
