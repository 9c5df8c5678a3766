use std::process::ExitCode;

fn main() -> ExitCode {
    lmdu::cli::main_with_args(std::env::args_os())
}
