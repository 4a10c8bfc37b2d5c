//! Different GPU types for the short and long pools.

use fleetsim::gpu;
use fleetsim::optimizer::{optimize, DesParams, SweepSpace};
use fleetsim::workload::builtin;
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let w = WorkloadSpec::from_cdf(builtin::lmsys(), 100.0, 0.5)?;
    let space = SweepSpace::new(vec![8192, 12288], gpu::builtin_profiles(), 0.5).mixed(true);
    let params = DesParams {
        n_requests: 5_000,
        seed: 42,
        ..DesParams::default()
    };
    let res = optimize(&w, &space, &params)?;
    for p in res.candidates.iter().filter(|p| !p.is_homogeneous()).take(12) {
        println!(
            "B_short={:<6} {:>4}/{:<4} {:>3}+{:<3} ${:>7.1}K  {}",
            p.b_short,
            p.gpu_s,
            p.gpu_l,
            p.n_s,
            p.n_l,
            p.annual_cost_usd / 1000.0,
            p.cause().unwrap_or_else(|| "pass".into())
        );
    }
    Ok(())
}
