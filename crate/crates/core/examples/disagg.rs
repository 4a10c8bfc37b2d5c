//! Prefill/decode disaggregation across every GPU pairing.

use fleetsim::disagg::{cheapest_feasible, size_disagg, DisaggParams};
use fleetsim::gpu;
use fleetsim::workload::builtin;
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let w = WorkloadSpec::from_cdf(builtin::azure(), 100.0, 0.92)?;
    let catalog = [gpu::a100(), gpu::h100()];
    for ttft_slo in [0.5, 0.1] {
        let rows = size_disagg(&w, &catalog, ttft_slo, 0.1, &DisaggParams::default())?;
        println!("TTFT SLO {:.0} ms", ttft_slo * 1000.0);
        for r in &rows {
            println!(
                "  {:<14} {:<10} ${:>6.1}K  TTFT {:>5.0} ms  TPOT {:>4.1} ms  {}",
                r.config.label(),
                r.config.gpus_label(),
                r.annual_cost_usd / 1000.0,
                r.ttft_p99 * 1000.0,
                r.tpot * 1000.0,
                r.cause.map_or("pass", |c| c.label())
            );
        }
        match cheapest_feasible(&rows) {
            Ok(r) => println!("  cheapest: {}", r.config.label()),
            Err(e) => println!("  {e}"),
        }
    }
    Ok(())
}
