//! Sweep the short/long split threshold for one GPU type and verify the
//! cheapest candidates in the simulator.
//!
//!     cargo run --example split_threshold -- 100

use fleetsim::gpu;
use fleetsim::optimizer::{optimize, DesParams, SweepSpace};
use fleetsim::workload::builtin;
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let lambda: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100.0);
    let workload = WorkloadSpec::from_cdf(builtin::azure(), lambda, 0.7)?;
    let space = SweepSpace::new(vec![1024, 2048, 4096], vec![gpu::h100()], 0.5);
    let params = DesParams {
        n_requests: 5_000,
        seed: 42,
        ..DesParams::default()
    };
    let res = optimize(&workload, &space, &params)?;

    println!("{:>8} {:>7} {:>5} {:>5} {:>10}  verdict", "B_short", "alpha", "n_s", "n_l", "$K/yr");
    for p in &res.frontier {
        println!(
            "{:>8} {:>7.3} {:>5} {:>5} {:>10.1}  {}",
            p.b_short,
            p.alpha_s,
            p.n_s,
            p.n_l,
            p.annual_cost_usd / 1000.0,
            p.cause().unwrap_or_else(|| "pass".into())
        );
    }
    if let Some(b) = &res.homogeneous_baseline {
        println!("homogeneous: {} GPUs at ${:.1}K/yr", b.total_gpus, b.annual_cost_usd / 1000.0);
    }
    if let Some(best) = &res.best {
        println!("best: B_short={} with {} GPUs, saving {:.1}%", best.b_short, best.total_gpus, best.saving_vs_baseline * 100.0);
    }
    Ok(())
}
