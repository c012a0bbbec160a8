use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(sapgan::cli::run(std::env::args_os().collect()))
}
