use std::process::ExitCode;

fn main() -> ExitCode {
    hetfx::cli::run()
}
