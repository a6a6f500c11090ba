use std::process::ExitCode;

fn main() -> ExitCode {
    fundascreen::cli::run()
}
