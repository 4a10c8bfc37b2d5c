//! The same two-pool fleet under the length, compress and random routers.

use fleetsim::des::{run_sim, FleetConfig, PoolConfig, SimParams};
use fleetsim::gpu;
use fleetsim::routing::RouterConfig;
use fleetsim::workload::builtin;
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let w = WorkloadSpec::from_cdf(builtin::agent(), 20.0, 0.9)?;
    let pools = vec![
        PoolConfig::new(gpu::h100(), 2, 4096),
        PoolConfig::new(gpu::h100(), 23, 524_288),
    ];
    let routers = [
        RouterConfig::Length { b_short: Some(4096) },
        RouterConfig::Compress { b_short: Some(4096), gamma: 1.5 },
        RouterConfig::Random { weights: None, uniform: false },
    ];
    for router in routers {
        let label = router.label();
        let sim = run_sim(&FleetConfig::new(pools.clone(), router), &w, &SimParams::new(10_000, 42))?;
        let ttft = sim.fleet.ttft.expect("measured");
        println!(
            "{label:<9} P50 {:>6.0} ms  P90 {:>6.0} ms  P99 {:>6.0} ms  short share {:.2}",
            ttft.p50 * 1000.0,
            ttft.p90 * 1000.0,
            ttft.p99 * 1000.0,
            sim.pools[0].routed as f64 / sim.arrivals as f64
        );
    }
    Ok(())
}
