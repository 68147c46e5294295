use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(riskvex_cli::run_args(std::env::args_os()) as u8)
}
