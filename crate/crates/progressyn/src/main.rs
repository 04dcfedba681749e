use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(progressyn::cli::run(std::env::args()) as u8)
}
