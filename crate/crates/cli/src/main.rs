use std::process::ExitCode;

use clap::Parser;
use weakmeter_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let text = outcome.summary.join("\n");
            // standard output carries the CSV when no file is given
            if outcome.wrote_file {
                println!("{text}");
            } else {
                eprintln!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("weakmeter: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
