use std::process::ExitCode;

use balalloc::cli::{dispatch, Cli};
use balalloc::Error;
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match dispatch(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        // output closed early by a pager or `head`
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Unstable(_) | Error::Contract(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
