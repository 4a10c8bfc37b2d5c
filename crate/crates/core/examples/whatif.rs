//! Minimal fleet per arrival rate, with the rate at which each fleet runs
//! out of headroom.

use fleetsim::gpu;
use fleetsim::optimizer::{whatif_lambda_sweep, DesParams, SweepSpace};
use fleetsim::workload::builtin;
use fleetsim::WorkloadSpec;

fn main() -> fleetsim::Result<()> {
    let w = WorkloadSpec::from_cdf(builtin::azure(), 25.0, 0.7)?;
    let space = SweepSpace::new(vec![2048, 4096, 8192], vec![gpu::h100()], 0.5);
    let params = DesParams {
        n_requests: 5_000,
        seed: 42,
        ..DesParams::default()
    };
    let rows = whatif_lambda_sweep(&w, &space, &[25.0, 50.0, 100.0, 200.0, 400.0], &params)?;
    for r in &rows {
        let gpus = r.total_gpus().map_or("-".into(), |n| n.to_string());
        let head = r.headroom_lambda.map_or("-".into(), |l| format!("{l:.1}"));
        println!("lambda {:>5}  GPUs {:>3}  provision more before {head}", r.lambda, gpus);
    }
    Ok(())
}
