//! Demand-response analysis: power target to batch cap, then latency at the cap.

use serde::Serialize;

use crate::des::{run_sim, FleetConfig, PoolConfig, SimParams};
use crate::error::{Error, Result};
use crate::gpu::GpuProfile;
use crate::queueing::{w99, PoolLoad, ServiceProfile};
use crate::workload::{WorkloadSpec, DEFAULT_CELLS};

pub const DEFAULT_WINDOW_S: f64 = 75.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerCap {
    pub batch_cap: u32,
    pub target_w: f64,
    /// Even a batch of one draws more than the target.
    pub over_target: bool,
}

/// Largest batch in `[1, baseline_batch]` whose draw stays at or under
/// `(1 - flex) * P_nom`.
pub fn invert_power(profile: &GpuProfile, flex: f64, baseline_batch: u32) -> Result<PowerCap> {
    let curve = profile
        .power
        .as_ref()
        .ok_or_else(|| Error::MissingPowerCurve(profile.name.clone()))?;
    if !(0.0..1.0).contains(&flex) {
        return Err(Error::InvalidArgument(format!("flex must be in [0, 1), got {flex}")));
    }
    if baseline_batch < 1 {
        return Err(Error::InvalidArgument("baseline batch must be >= 1".into()));
    }
    let target_w = (1.0 - flex) * curve.nominal_w();
    let cap = (1..=baseline_batch)
        .rev()
        .find(|&b| curve.power(b as f64) <= target_w);
    Ok(PowerCap {
        batch_cap: cap.unwrap_or(1),
        target_w,
        over_target: cap.is_none(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlexPoint {
    pub flex_fraction: f64,
    pub batch_cap: u32,
    pub over_target: bool,
    pub watts_per_gpu: f64,
    pub fleet_kw: f64,
    pub rho: f64,
    /// Steady-state P99 TTFT; infinite when the capped pool is unstable.
    pub p99_analytical: f64,
    pub p99_des: f64,
    pub slo_pass: bool,
    pub short_event_pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexParams {
    pub flex_grid: Vec<f64>,
    pub baseline_batch: u32,
    pub slo_s: f64,
    pub window_s: f64,
    pub seed: u64,
}

impl FlexParams {
    pub fn standard(slo_s: f64, seed: u64) -> Self {
        Self {
            flex_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            baseline_batch: 128,
            slo_s,
            window_s: DEFAULT_WINDOW_S,
            seed,
        }
    }
}

/// Sweeps power-reduction targets for a homogeneous pool.
pub fn flex_curve(pool: &PoolConfig, workload: &WorkloadSpec, params: &FlexParams) -> Result<Vec<FlexPoint>> {
    let gpu = &pool.gpu;
    let lo = 0.0;
    let hi = workload.max_tokens() as f64;
    params
        .flex_grid
        .iter()
        .map(|&flex| {
            let cap = invert_power(gpu, flex, params.baseline_batch)?;
            let capped = pool.clone().with_batch_cap(cap.batch_cap);
            let batch = capped.batch()?;
            let watts = gpu.power(batch)?;
            let service = ServiceProfile::for_range(gpu, batch, workload, lo, hi, DEFAULT_CELLS)?;
            let load = PoolLoad::new(workload.arrival_rate, service.mean_service, service.scv, pool.gpu_count)?;
            let stats = w99(&load);
            let p99_analytical = if stats.stable {
                gpu.ttft_at(stats.w99, service.p99_l_in, batch)
            } else {
                f64::INFINITY
            };
            let fleet = FleetConfig::single(capped);
            let sim = run_sim(&fleet, workload, &SimParams::windowed(params.window_s, params.seed))?;
            let p99_des = if sim.fleet.ttft.is_some() { sim.p99_ttft() } else { 0.0 };
            Ok(FlexPoint {
                flex_fraction: flex,
                batch_cap: batch,
                over_target: cap.over_target,
                watts_per_gpu: watts,
                fleet_kw: pool.gpu_count as f64 * watts / 1000.0,
                rho: stats.rho,
                p99_analytical,
                p99_des,
                slo_pass: p99_analytical <= params.slo_s,
                short_event_pass: p99_des <= params.slo_s,
            })
        })
        .collect()
}
