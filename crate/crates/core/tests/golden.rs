use std::path::PathBuf;

use fleetsim::cli::{run_file, Command, RunOptions};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn check(command: Command, name: &str) {
    let dir = scenarios();
    let (outcome, format) = run_file(command, Some(&dir.join(format!("{name}.toml"))), &RunOptions::default()).unwrap();
    let got = outcome.report.render(format).unwrap();
    let want = std::fs::read_to_string(dir.join("golden").join(format!("{name}.txt"))).unwrap();
    assert!(got == want, "{name} differs from its golden report:\n{got}");
    assert!(outcome.feasible, "{name} has no feasible answer");
}

#[test]
fn p1_split() {
    check(Command::Optimize, "p1_split");
}

#[test]
fn p2_agent() {
    check(Command::Simulate, "p2_agent");
}

#[test]
fn p3_gpu_choice() {
    check(Command::Optimize, "p3_gpu_choice");
}

#[test]
fn p4_whatif() {
    check(Command::Whatif, "p4_whatif");
}

#[test]
fn p5_routers() {
    check(Command::Simulate, "p5_routers");
}

#[test]
fn p6_mixed() {
    check(Command::Optimize, "p6_mixed");
}

#[test]
fn p7_disagg() {
    check(Command::Disagg, "p7_disagg");
}

#[test]
fn p8_gridflex() {
    check(Command::Gridflex, "p8_gridflex");
}

#[test]
fn json_scenario_matches_toml() {
    let dir = scenarios();
    let toml = fleetsim::Scenario::load(&dir.join("p7_disagg.toml")).unwrap();
    let json = fleetsim::Scenario::from_json(
        r#"{"name": "p7_disagg", "seed": 42,
            "workload": {"cdf": "azure", "arrival_rate": 100.0, "prompt_fraction": 0.92},
            "slo": {"p99_ttft_ms": 500, "tpot_ms": 100},
            "disagg": {"gpus": ["A100", "H100"]}}"#,
    )
    .unwrap();
    let a = fleetsim::cli::cmd_disagg(&toml).unwrap().report;
    let b = fleetsim::cli::cmd_disagg(&json).unwrap().report;
    assert_eq!(a, b);
}
