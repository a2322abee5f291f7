use std::process::ExitCode;

fn main() -> ExitCode {
    sevc::cli_frontend::run()
}
