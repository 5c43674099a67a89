use std::process::ExitCode;

fn main() -> ExitCode {
    navstack::cli::main_with_args(std::env::args_os())
}
