use std::process::ExitCode;

fn main() -> ExitCode {
    centrifugal::cli::run_from_args(std::env::args_os())
}
