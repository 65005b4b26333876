//! `frqi`: FRQI encoding experiments and FRQI-Pairs classifier training.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use frqi_core::data::DataError;
use frqi_core::frqi::FrqiError;
use frqi_core::model::ModelError;
use frqi_core::qsim::QsimError;
use frqi_core::train::TrainError;
use serde_json::json;

use args::{Cli, Command, DatasetCommand};

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return match e {
                TrainError::Divergence { .. } => "divergence",
                _ => "train",
            };
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return match e {
                ModelError::LayoutVersion { .. } | ModelError::Checkpoint(_) | ModelError::ParamCount { .. } => {
                    "checkpoint"
                }
                _ => "model",
            };
        }
        if cause.is::<DataError>() {
            return "data";
        }
        if cause.is::<FrqiError>() {
            return "frqi";
        }
        if cause.is::<QsimError>() {
            return "qsim";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "runtime"
}

fn report_error(kind: &str, message: String, code: u8) -> ExitCode {
    let body = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match &cli.command {
        Command::Encode(a) => commands::encode(a),
        Command::Sample(a) => commands::sample(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Dataset(DatasetCommand::Cache(a)) => commands::dataset_cache(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error("usage", e.render().to_string().trim().to_string(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(error_kind(&e), format!("{e:#}"), 1),
    }
}
