use std::process::ExitCode;

fn main() -> ExitCode {
    pitrack::cli::run(std::env::args_os())
}
