use clap::Parser;

use cclp_cli::args::{Cli, Command};
use cclp_cli::commands;

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Toy(args) => commands::toy::run(args).map(|()| 0),
        Command::Train(args) => commands::train::run(args).map(|()| 0),
        Command::Ablate(args) => commands::ablate::run(args).map(|()| 0),
        Command::Checkgrad(args) => commands::checkgrad::run(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {}", err);
            std::process::exit(err.exit_code());
        }
    }
}
