// SPDX-License-Identifier: Apache-2.0
//! The `tips` command line.

pub mod cli;
mod commands;
pub mod context;
pub mod demo;
mod output;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use crate::cli::Cli;

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand | ErrorKind::MissingSubcommand => {
                    let _ = e.print();
                    2
                }
                kind => {
                    let code = if kind == ErrorKind::InvalidSubcommand { "UNKNOWN_COMMAND" } else { "INVALID_INPUT" };
                    let text = e.render().to_string();
                    let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
                    eprintln!("ERROR {code}: {first}");
                    2
                }
            };
        }
    };
    let format = cli.output;
    match commands::dispatch(cli) {
        Ok(output) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(&output.render(format));
            let _ = stdout.flush();
            0
        }
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code(), e);
            e.code().exit_code()
        }
    }
}
