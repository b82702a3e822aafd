//! `signsplit` command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{merge_config, Cli};

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause
            .downcast_ref::<signsplit::Error>()
            .is_some_and(signsplit::Error::is_io)
            || cause.downcast_ref::<std::io::Error>().is_some()
    });
    if io {
        2
    } else {
        1
    }
}

fn run(argv: Vec<String>) -> anyhow::Result<()> {
    let cli = match Cli::try_parse_from(merge_config(argv)?) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    commands::run(cli.command)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    if argv.len() < 2 {
        let mut cmd = <Cli as clap::CommandFactory>::command();
        let _ = cmd.print_help();
        return ExitCode::from(1);
    }
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
