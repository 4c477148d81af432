use std::process::ExitCode;

fn main() -> ExitCode {
    foilopt::cli::main_with_args(std::env::args_os())
}
