mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use pert_core::wor::CorruptionConfig;
use pert_core::{toy, Error};

use args::{Cli, Command};

/// 0 success, 1 usage or configuration, 2 data, 3 training divergence.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Divergence { .. }) => 3,
        Some(Error::Config(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare { run, select_ratio } => commands::prepare(&run, select_ratio),
        Command::Pretrain { run, resume } => commands::pretrain(&run, resume.as_deref()),
        Command::Ablate { run, suite } => commands::ablate(&run, &suite),
        Command::WorCorrupt {
            input,
            out,
            vocab,
            seed,
            max_spans,
            max_context,
            splitter,
        } => commands::wor_corrupt(commands::CorruptArgs {
            input: &input,
            out: &out,
            vocab: vocab.as_deref(),
            seed,
            cfg: CorruptionConfig { max_spans, max_context },
            splitter: &splitter,
        }),
        Command::WorTrain(a) => commands::wor_train(&a),
        Command::WorEval {
            model,
            data,
            vocab,
            max_len,
            out,
        } => commands::wor_eval(&model, &data, &vocab, max_len, out.as_deref()),
        Command::Inspect { instances, index, vocab } => commands::inspect(&instances, index, vocab.as_deref()),
        Command::Report { metrics, out } => commands::report(&metrics, out.as_deref()),
        Command::Toy {
            out,
            seed,
            documents,
            sentences_per_document,
            min_words,
            max_words,
        } => commands::toy_files(
            &out,
            seed,
            &toy::ToySpec {
                max_words,
                min_words,
                documents,
                sentences_per_document,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
