use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tailgam::cli::run() as u8)
}
