use std::process::ExitCode;

use micromorph::cli::{main_with, Outcome};

fn main() -> ExitCode {
    let outcome = main_with(std::env::args_os());
    match &outcome {
        Outcome::Done(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Outcome::Info(text) => print!("{text}"),
        Outcome::Failed(line) => eprintln!("{line}"),
    }
    ExitCode::from(outcome.exit_code())
}
