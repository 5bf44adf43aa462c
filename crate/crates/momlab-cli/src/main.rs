//! `momlab` — command-line front end for the momentum laboratory.
//!
//! Subcommands wrap the library's experiment drivers and write plain-file
//! outputs (CSV tables, JSON metadata, binary PGM heatmaps, and a gnuplot
//! script) suitable for external plotting. Every run is reproducible: the
//! resolved configuration lands in `meta.json` and can be replayed with
//! `--config`.

mod commands;
mod output;
mod pgm;

use clap::error::ErrorKind;
use clap::Parser;

use commands::{Cli, CommandOutcome};

/// Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime
/// error.
fn main() {
    // Die quietly when the downstream pipe closes (e.g. `momlab .. | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match commands::dispatch(cli) {
        Ok(CommandOutcome::Success) => {}
        Ok(CommandOutcome::ValidationFailed) => std::process::exit(2),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(3);
        }
    }
}
