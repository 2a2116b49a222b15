//! Command-line front end: argument parsing, config resolution and the
//! subcommands that tie the library modules into end-to-end runs.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors (bad flags,
//! missing or malformed inputs, invalid configs), 2 for runtime failures
//! (backends, numerics, checkpoint I/O).

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

mod commands;
pub mod config;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "debias-contrast", version, about = "Contrastive debiasing: augment, train, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    let env_seed = std::env::var(config::SEED_ENV).ok();
    match commands::dispatch(cli.command, env_seed.as_deref(), out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", render(&e));
            exit_code(&e)
        }
    }
}

/// The error chain joined with `: `, skipping causes whose text the
/// previous message already contains.
fn render(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    let mut last = msg.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        last = text;
    }
    msg
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(lib) = cause.downcast_ref::<debias_contrast::Error>() {
            use debias_contrast::Error as E;
            return match lib {
                E::Backend { .. } | E::Numerical(_) | E::Shape(_) | E::Checkpoint(_) => 2,
                E::Io { source, .. } => io_code(source),
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return io_code(io);
        }
    }
    1
}

fn io_code(e: &std::io::Error) -> i32 {
    match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidInput | std::io::ErrorKind::InvalidData => 1,
        _ => 2,
    }
}
