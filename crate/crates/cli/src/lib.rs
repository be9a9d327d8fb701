//! Command-line front end: train, eval, ablate, bench, export-latent, synth.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use clap::Parser;

pub use args::Cli;
pub use error::{CliError, CliResult};

pub fn run(cli: &Cli) -> CliResult<()> {
    use args::Command::*;
    match &cli.command {
        Train(a) => commands::cmd_train(a).map(drop),
        Eval(a) => commands::cmd_eval(a).map(drop),
        Ablate(a) => commands::cmd_ablate(a).map(drop),
        Bench(a) => commands::cmd_bench(a).map(drop),
        ExportLatent(a) => commands::cmd_export_latent(a).map(drop),
        Synth(a) => commands::cmd_synth(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
///
/// Help and version requests exit 0; malformed flags print a single
/// `error[usage]` line and exit 2.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}
