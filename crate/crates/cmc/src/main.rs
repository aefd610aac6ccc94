use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cmc::cli::run(std::env::args_os()))
}
