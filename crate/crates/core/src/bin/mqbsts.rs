use std::process::ExitCode;

fn main() -> ExitCode {
    mqbsts::cli::main_with_args(std::env::args_os())
}
