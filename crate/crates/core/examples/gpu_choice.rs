//! Cheapest verified plan per GPU type for the same workload.

use fleetsim::gpu;
use fleetsim::optimizer::{optimize, DesParams, SweepSpace};
use fleetsim::workload::builtin;
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let w = WorkloadSpec::from_cdf(builtin::azure(), 100.0, 0.7)?;
    let params = DesParams {
        n_requests: 5_000,
        seed: 42,
        ..DesParams::default()
    };
    for g in gpu::builtin_profiles() {
        let space = SweepSpace::new(vec![1024, 2048, 4096, 8192], vec![g.clone()], 0.5);
        let res = optimize(&w, &space, &params)?;
        match &res.best {
            Some(p) => println!(
                "{:<5} B_short={:<6} {:>3} GPUs  ${:>7.1}K/yr  DES P99 {:.0} ms",
                g.name,
                p.b_short,
                p.total_gpus,
                p.annual_cost_usd / 1000.0,
                p.des.as_ref().map_or(f64::NAN, |d| d.p99_ttft * 1000.0)
            ),
            None => println!("{:<5} no verified plan", g.name),
        }
    }
    Ok(())
}
