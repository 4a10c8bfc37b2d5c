use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fleetsim::cli::{error_exit_code, run_file, Command, RunOptions, EXIT_USAGE};
use fleetsim::ReportFormat;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Optimize,
    Simulate,
    Whatif,
    Disagg,
    Gridflex,
    Profiles,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

/// Capacity planner for LLM inference GPU fleets.
#[derive(Debug, Parser)]
#[command(name = "fleetsim", version)]
struct Args {
    command: Cmd,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-request CSV (simulate only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let command = match args.command {
        Cmd::Optimize => Command::Optimize,
        Cmd::Simulate => Command::Simulate,
        Cmd::Whatif => Command::Whatif,
        Cmd::Disagg => Command::Disagg,
        Cmd::Gridflex => Command::Gridflex,
        Cmd::Profiles => Command::Profiles,
    };
    let opts = RunOptions {
        seed: args.seed,
        requests: args.requests,
        format: args.format.map(|f| match f {
            Format::Csv => ReportFormat::Csv,
            Format::Table => ReportFormat::Table,
        }),
        trace: args.trace,
    };
    let result = run_file(command, args.scenario.as_deref(), &opts).and_then(|(outcome, format)| {
        let text = outcome.report.render(format)?;
        match &args.out {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(outcome.exit_code())
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fleetsim: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
