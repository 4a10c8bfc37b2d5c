//! Agent traffic: the analytical model and the simulator disagree about a
//! homogeneous long-context fleet.

use fleetsim::des::{run_sim, FleetConfig, PoolConfig, SimParams};
use fleetsim::gpu;
use fleetsim::queueing::{w99, PoolLoad, ServiceProfile};
use fleetsim::routing::RouterConfig;
use fleetsim::workload::{builtin, DEFAULT_CELLS};
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let w = WorkloadSpec::from_cdf(builtin::agent(), 20.0, 0.9)?;
    let h100 = gpu::h100();
    let homog = PoolConfig::new(h100.clone(), 24, 524_288);

    let batch = homog.batch()?;
    let svc = ServiceProfile::for_range(&h100, batch, &w, 0.0, w.max_tokens() as f64, DEFAULT_CELLS)?;
    let stats = w99(&PoolLoad::new(w.arrival_rate, svc.mean_service, svc.scv, homog.gpu_count)?);
    println!("analytical: n_max {batch}, E[S] {:.1} s, scv {:.2}, rho {:.2}", svc.mean_service, svc.scv, stats.rho);

    let params = SimParams::new(20_000, 42).with_slo(1.0);
    let fleets = [
        ("homogeneous", FleetConfig::single(homog)),
        (
            "two-pool",
            FleetConfig::new(
                vec![PoolConfig::new(h100.clone(), 2, 4096), PoolConfig::new(h100, 23, 524_288)],
                RouterConfig::Length { b_short: Some(4096) },
            ),
        ),
    ];
    for (label, fleet) in &fleets {
        let sim = run_sim(fleet, &w, &params)?;
        println!("{label}: {} GPUs, DES P99 TTFT {:.0} ms", fleet.total_gpus(), sim.p99_ttft() * 1000.0);
        for p in &sim.pools {
            println!("  {:<16} util {:.3}  P99 {:.0} ms", p.label, p.utilization, p.p99_ttft() * 1000.0);
        }
    }
    Ok(())
}
