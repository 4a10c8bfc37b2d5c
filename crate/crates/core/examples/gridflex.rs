//! Demand response: cap the batch to meet a power target and check latency
//! over a short event window.

use fleetsim::des::PoolConfig;
use fleetsim::gpu;
use fleetsim::gridflex::{flex_curve, FlexParams};
use fleetsim::workload::builtin;
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let w = WorkloadSpec::from_cdf(builtin::azure(), 200.0, 0.7)?;
    let pool = PoolConfig::new(gpu::h100(), 40, 8192);
    let pts = flex_curve(&pool, &w, &FlexParams::standard(0.5, 42))?;
    for p in &pts {
        println!(
            "flex {:>3.0}%  cap {:>3}{}  {:>5.1} kW  rho {:.2}  steady {}  75 s window {}",
            p.flex_fraction * 100.0,
            p.batch_cap,
            if p.over_target { "*" } else { " " },
            p.fleet_kw,
            p.rho,
            if p.slo_pass { "pass" } else { "FAIL" },
            if p.short_event_pass { "pass" } else { "FAIL" }
        );
    }
    Ok(())
}
