use std::process::ExitCode;

fn main() -> ExitCode {
    ooc_forge::cli::run(std::env::args_os())
}
