//! Load a scenario file and render the report the CLI would print.
//!
//!     cargo run --example scenario_report -- scenarios/p7_disagg.toml disagg

use std::path::PathBuf;
use std::str::FromStr;

use fleetsim::cli::{run, Command, RunOptions};
use fleetsim::{ReportFormat, Scenario};

fn main() -> fleetsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/p8_gridflex.toml")
    });
    let command = match args.next().as_deref() {
        Some("optimize") => Command::Optimize,
        Some("simulate") => Command::Simulate,
        Some("whatif") => Command::Whatif,
        Some("disagg") => Command::Disagg,
        Some("profiles") => Command::Profiles,
        _ => Command::Gridflex,
    };
    let format = args.next().map_or(Ok(ReportFormat::Table), |f| ReportFormat::from_str(&f))?;
    let scenario = Scenario::load(&path)?;
    let outcome = run(command, &scenario, &RunOptions::default())?;
    print!("{}", outcome.report.render(format)?);
    println!("exit code {}", outcome.exit_code());
    Ok(())
}
