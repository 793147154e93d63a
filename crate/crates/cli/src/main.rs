use std::io::{stderr, stdout};
use std::process::ExitCode;

fn main() -> ExitCode {
    let status = moon_cli::run(std::env::args_os(), &mut stdout(), &mut stderr());
    ExitCode::from(status as u8)
}
