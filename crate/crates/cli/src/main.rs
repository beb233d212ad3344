mod args;
mod cmd;
mod error;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, DatasetCommand};
use run::Run;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hrtfkit: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> error::Result<()> {
    let run = |name: &'static str| Run::new(&cli.out, cli.run_name.as_deref(), name, cli.seed);
    match &cli.command {
        Command::Dataset { command: DatasetCommand::Synth(a) } => cmd::dataset::synth(&run("dataset-synth")?, a),
        Command::Train(a) => cmd::model::train(&run("train")?, a),
        Command::Simulate(a) => cmd::measure::simulate(&run("simulate")?, a),
        Command::Qc(a) => cmd::measure::qc(&run("qc")?, a),
        Command::Individualize(a) => cmd::model::individualize(&run("individualize")?, a),
        Command::EvalLsd(a) => cmd::model::eval_lsd(&run("eval-lsd")?, a),
        Command::Sweep(a) => cmd::model::sweep(&run("sweep")?, a),
        Command::LocTrain(a) => cmd::loc::train(&run("loc-train")?, a),
        Command::LocEval(a) => cmd::loc::eval(&run("loc-eval")?, a),
        Command::Spatialize(a) => cmd::spatialize::spatialize(&run("spatialize")?, a),
    }
}
