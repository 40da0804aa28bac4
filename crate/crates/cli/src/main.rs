use std::process::ExitCode;

use clap::Parser;
use metaprop_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("metaprop: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
