//! `qadst`: build QA training corpora, track dialogue state by asking a QA
//! model one question per slot, and score the predictions.

mod build_corpus;
mod error;
mod evaluate;
mod inputs;
mod lint;
mod run;
mod sweep;
mod track;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "qadst",
    version,
    about = "Zero-shot dialogue state tracking through question answering"
)]
#[command(
    after_help = "Exit codes: 0 success, 2 configuration error, 3 data error, 4 backend unavailable."
)]
struct Cli {
    /// Log filter (error, warn, info, debug, trace); RUST_LOG takes precedence
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge QA datasets into unified JSONL and mix in unanswerable examples
    BuildCorpus(build_corpus::BuildCorpusArgs),
    /// Predict the dialogue state of every user turn
    Track(track::TrackArgs),
    /// Score predictions against gold states
    Evaluate(evaluate::EvaluateArgs),
    /// Joint and slot gate accuracy across unanswerable-question rates with a
    /// simulated answerer
    SweepAlpha(sweep::SweepArgs),
    /// Check a schema for slots the tracker cannot answer correctly
    SchemaLint(lint::LintArgs),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::BuildCorpus(a) => build_corpus::run(a),
        Command::Track(a) => track::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::SweepAlpha(a) => sweep::run(a),
        Command::SchemaLint(a) => lint::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
