//! Two-phase fleet optimizer.
//!
//! Phase 1 sweeps `(B_short, short GPU, long GPU)`, splits traffic at
//! `F(B_short)`, and sizes each pool to the smallest count meeting the
//! utilization cap and the analytical P99 TTFT. Phase 2 replays the cheapest
//! candidates through the simulator.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::des::{run_sim, FleetConfig, PoolConfig, SimParams};
use crate::error::{Error, Result};
use crate::gpu::GpuProfile;
use crate::queueing::{min_servers, w99, PoolLoad, ServiceProfile, Sizing};
use crate::reliability::production_count;
use crate::routing::RouterConfig;
use crate::workload::{conditional_moments, conditional_quantile, LengthSample, WorkloadSpec, DEFAULT_CELLS};

pub const DEFAULT_RHO_CAP: f64 = 0.85;
pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_VERIFY_REQUESTS: usize = 20_000;
pub const DEFAULT_MAX_GPUS_PER_POOL: u32 = 256;

/// How Phase 1 splits traffic between the pools.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SizingMode {
    #[default]
    Length,
    /// Totals in `(B_short, gamma * B_short]` are compressed into the short pool.
    Compress { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpace {
    pub b_short_grid: Vec<u64>,
    pub gpu_catalog: Vec<GpuProfile>,
    pub max_gpus_per_pool: u32,
    pub rho_cap: f64,
    pub slo_p99_ttft: f64,
    pub allow_mixed_types: bool,
    /// Long-pool context bound; the workload maximum when unset.
    pub long_context_bound: Option<u64>,
    pub cells: usize,
    pub sizing: SizingMode,
}

impl SweepSpace {
    pub fn new(b_short_grid: Vec<u64>, gpu_catalog: Vec<GpuProfile>, slo_p99_ttft: f64) -> Self {
        Self {
            b_short_grid,
            gpu_catalog,
            max_gpus_per_pool: DEFAULT_MAX_GPUS_PER_POOL,
            rho_cap: DEFAULT_RHO_CAP,
            slo_p99_ttft,
            allow_mixed_types: false,
            long_context_bound: None,
            cells: DEFAULT_CELLS,
            sizing: SizingMode::Length,
        }
    }

    pub fn mixed(mut self, allow: bool) -> Self {
        self.allow_mixed_types = allow;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_short_grid.is_empty() {
            return Err(Error::InvalidArgument("b_short grid is empty".into()));
        }
        if self.b_short_grid.contains(&0) {
            return Err(Error::InvalidArgument("b_short values must be >= 1".into()));
        }
        if self.gpu_catalog.is_empty() {
            return Err(Error::InvalidArgument("GPU catalog is empty".into()));
        }
        if !(self.rho_cap > 0.0 && self.rho_cap < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho_cap must be in (0, 1), got {}",
                self.rho_cap
            )));
        }
        if !(self.slo_p99_ttft.is_finite() && self.slo_p99_ttft >= 0.0) {
            return Err(Error::InvalidArgument(format!("SLO = {}", self.slo_p99_ttft)));
        }
        if self.max_gpus_per_pool < 1 {
            return Err(Error::InvalidArgument("max_gpus_per_pool must be >= 1".into()));
        }
        if let SizingMode::Compress { gamma } = self.sizing {
            if !(gamma > 1.0) {
                return Err(Error::InvalidArgument(format!("gamma must exceed 1, got {gamma}")));
            }
        }
        for g in &self.gpu_catalog {
            g.validate()?;
        }
        Ok(())
    }

    fn long_bound(&self, workload: &WorkloadSpec) -> u64 {
        self.long_context_bound.unwrap_or_else(|| workload.max_tokens())
    }
}

/// Why a pool could not meet its constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PoolCause {
    /// Prefill plus one iteration exceeds the SLO at any count.
    PrefillBound { floor_s: f64 },
    /// No count within the per-pool bound meets the SLO.
    CountBound,
}

impl PoolCause {
    pub fn label(&self) -> &'static str {
        match self {
            Self::PrefillBound { .. } => "prefill-bound",
            Self::CountBound => "count-bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolPlan {
    pub gpu: String,
    #[serde(skip)]
    pub profile: GpuProfile,
    pub context_bound: u64,
    pub batch: u32,
    pub lambda: f64,
    pub mean_service: f64,
    pub scv: f64,
    pub p99_l_in: u64,
    /// GPUs; for an infeasible pool, the count meeting the utilization cap alone.
    pub servers: u32,
    pub rho: f64,
    pub w99: f64,
    pub p99_ttft: f64,
    pub cause: Option<PoolCause>,
}

impl PoolPlan {
    pub fn feasible(&self) -> bool {
        self.cause.is_none()
    }

    pub fn slots(&self) -> u64 {
        self.servers as u64 * self.batch as u64
    }

    pub fn annual_cost(&self) -> f64 {
        self.servers as f64 * self.profile.annual_cost_usd
    }

    fn pool_config(&self) -> PoolConfig {
        PoolConfig::new(self.profile.clone(), self.servers, self.context_bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesVerdict {
    pub seed: u64,
    pub p99_ttft: f64,
    pub pool_p99_ttft: Vec<f64>,
    pub slo_attainment: Option<f64>,
    pub rejected: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductionCounts {
    pub availability: f64,
    pub n_s: u32,
    pub n_l: u32,
    pub annual_cost_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub b_short: u64,
    pub alpha_s: f64,
    pub gpu_s: String,
    pub gpu_l: String,
    pub n_s: u32,
    pub n_l: u32,
    pub total_gpus: u32,
    pub annual_cost_usd: f64,
    pub analytical_slo_pass: bool,
    pub short: PoolPlan,
    pub long: Option<PoolPlan>,
    pub des: Option<DesVerdict>,
    pub saving_vs_baseline: f64,
    pub production: Option<ProductionCounts>,
}

impl ParetoPoint {
    fn assemble(b_short: u64, alpha_s: f64, short: PoolPlan, long: Option<PoolPlan>) -> Self {
        let n_s = short.servers;
        let n_l = long.as_ref().map_or(0, |p| p.servers);
        let annual_cost_usd = short.annual_cost() + long.as_ref().map_or(0.0, PoolPlan::annual_cost);
        let analytical_slo_pass = short.feasible() && long.as_ref().is_none_or(PoolPlan::feasible);
        Self {
            b_short,
            alpha_s,
            gpu_s: short.gpu.clone(),
            gpu_l: long.as_ref().map_or_else(|| short.gpu.clone(), |p| p.gpu.clone()),
            n_s,
            n_l,
            total_gpus: n_s + n_l,
            annual_cost_usd,
            analytical_slo_pass,
            short,
            long,
            des: None,
            saving_vs_baseline: 0.0,
            production: None,
        }
    }

    /// Analytical verdict, overridden by the simulator's when present.
    pub fn slo_pass(&self) -> bool {
        self.analytical_slo_pass && self.des.as_ref().is_none_or(|d| d.pass)
    }

    pub fn cause(&self) -> Option<String> {
        let mut parts = Vec::new();
        if let Some(c) = self.short.cause {
            parts.push(format!("short {}", c.label()));
        }
        if let Some(c) = self.long.as_ref().and_then(|p| p.cause) {
            parts.push(format!("long {}", c.label()));
        }
        if self.analytical_slo_pass && self.des.as_ref().is_some_and(|d| !d.pass) {
            parts.push("des-fail".into());
        }
        (!parts.is_empty()).then(|| parts.join(", "))
    }

    pub fn is_homogeneous(&self) -> bool {
        self.long.is_none()
    }

    /// Fleet to simulate. Routers without a threshold use `b_short`.
    pub fn fleet(&self, router: &RouterConfig) -> FleetConfig {
        let mut pools = vec![self.short.pool_config()];
        if let Some(l) = &self.long {
            if l.servers > 0 {
                pools.push(l.pool_config());
            }
        }
        let router = match router {
            RouterConfig::Length { b_short: None } => RouterConfig::Length {
                b_short: Some(self.b_short),
            },
            RouterConfig::Compress { b_short: None, gamma } => RouterConfig::Compress {
                b_short: Some(self.b_short),
                gamma: *gamma,
            },
            other => other.clone(),
        };
        FleetConfig::new(pools, router)
    }

    fn short_slots(&self) -> u64 {
        self.short.slots()
    }
}

/// Deterministic ranking: cost, total GPUs, short-pool slots (more first),
/// larger `B_short`, then GPU names.
pub fn rank_cmp(a: &ParetoPoint, b: &ParetoPoint) -> Ordering {
    a.annual_cost_usd
        .total_cmp(&b.annual_cost_usd)
        .then_with(|| a.total_gpus.cmp(&b.total_gpus))
        .then_with(|| b.short_slots().cmp(&a.short_slots()))
        .then_with(|| b.b_short.cmp(&a.b_short))
        .then_with(|| a.gpu_s.cmp(&b.gpu_s))
        .then_with(|| a.gpu_l.cmp(&b.gpu_l))
}

/// Smallest `2^k * 1024` at or above `max_tokens`.
pub fn homogeneous_context(max_tokens: u64) -> u64 {
    let mut b = 1024u64;
    while b < max_tokens {
        b *= 2;
    }
    b
}

fn size_pool(
    profile: &GpuProfile,
    context_bound: u64,
    lambda: f64,
    service: ServiceProfile,
    space: &SweepSpace,
) -> PoolPlan {
    let sizing = min_servers(
        lambda,
        &service,
        profile,
        space.rho_cap,
        space.slo_p99_ttft,
        space.max_gpus_per_pool,
    );
    let (servers, cause) = match sizing {
        Sizing::Sized { servers, .. } => (servers, None),
        Sizing::PrefillBound { floor } => (
            cap_only_count(lambda, &service, space.rho_cap),
            Some(PoolCause::PrefillBound { floor_s: floor }),
        ),
        Sizing::CountBound { .. } => (
            cap_only_count(lambda, &service, space.rho_cap),
            Some(PoolCause::CountBound),
        ),
    };
    let stats = w99(&PoolLoad {
        lambda,
        mean_service: service.mean_service,
        scv: service.scv,
        servers,
    });
    let p99_ttft = if stats.stable {
        profile.ttft_at(stats.w99, service.p99_l_in, service.batch)
    } else {
        f64::INFINITY
    };
    PoolPlan {
        gpu: profile.name.clone(),
        profile: profile.clone(),
        context_bound,
        batch: service.batch,
        lambda,
        mean_service: service.mean_service,
        scv: service.scv,
        p99_l_in: service.p99_l_in,
        servers,
        rho: stats.rho,
        w99: stats.w99,
        p99_ttft,
        cause,
    }
}

fn cap_only_count(lambda: f64, service: &ServiceProfile, rho_cap: f64) -> u32 {
    let offered = lambda * service.mean_service;
    let mut c = ((offered / rho_cap).ceil() as u32).max(1);
    while c > 1 && offered / (c - 1) as f64 <= rho_cap {
        c -= 1;
    }
    c
}

fn compressed(total: u64, phi: f64, b_short: u64) -> LengthSample {
    let s = LengthSample::split(total, phi);
    if total <= b_short {
        return s;
    }
    let excess = total - b_short;
    let l_in = s.l_in.saturating_sub(excess).max(1);
    let rest = excess - (s.l_in - l_in);
    LengthSample {
        l_in,
        l_out: s.l_out.saturating_sub(rest).max(1),
    }
}

fn compress_service(
    profile: &GpuProfile,
    batch: u32,
    workload: &WorkloadSpec,
    hi: f64,
    b_short: u64,
    cells: usize,
) -> Result<ServiceProfile> {
    let phi = workload.prompt_fraction;
    let cdf = workload.cdf();
    let (mean_service, scv) = conditional_moments(cdf, 0.0, hi, cells, |t| {
        let s = compressed((t.round() as u64).max(1), phi, b_short);
        profile.service_time_at(s.l_in, s.l_out, batch)
    })?;
    let p99 = conditional_quantile(cdf, 0.0, hi, 0.99)?;
    let p99_l_in = compressed((p99.round() as u64).max(1), phi, b_short).l_in;
    Ok(ServiceProfile {
        batch,
        mean_service,
        scv,
        p99_l_in,
    })
}

/// Evaluates one `(B_short, short GPU, long GPU)` candidate. `None` when a
/// pool's context bound admits no sequence on its GPU.
pub fn evaluate_candidate(
    workload: &WorkloadSpec,
    space: &SweepSpace,
    b_short: u64,
    gpu_s: &GpuProfile,
    gpu_l: &GpuProfile,
) -> Result<Option<ParetoPoint>> {
    let max = workload.max_tokens();
    let cdf = workload.cdf();
    let lambda = workload.arrival_rate;
    let split_at = match space.sizing {
        SizingMode::Length => b_short as f64,
        SizingMode::Compress { gamma } => gamma * b_short as f64,
    };
    let alpha = cdf.fraction_below(split_at);
    let Ok(batch_s) = gpu_s.n_max(b_short) else {
        return Ok(None);
    };
    let short_hi = split_at.min(max as f64);
    let short_service = match space.sizing {
        SizingMode::Length => ServiceProfile::for_range(gpu_s, batch_s, workload, 0.0, short_hi, space.cells)?,
        SizingMode::Compress { .. } => compress_service(gpu_s, batch_s, workload, short_hi, b_short, space.cells)?,
    };
    let short = size_pool(gpu_s, b_short, lambda * alpha, short_service, space);
    let long = if alpha < 1.0 {
        let bound = space.long_bound(workload);
        let Ok(batch_l) = gpu_l.n_max(bound) else {
            return Ok(None);
        };
        let service = ServiceProfile::for_range(gpu_l, batch_l, workload, split_at, max as f64, space.cells)?;
        Some(size_pool(gpu_l, bound, lambda * (1.0 - alpha), service, space))
    } else {
        None
    };
    Ok(Some(ParetoPoint::assemble(b_short, alpha, short, long)))
}

/// Single-pool plan on `gpu` at the homogeneous context bound.
pub fn homogeneous_point(workload: &WorkloadSpec, space: &SweepSpace, gpu: &GpuProfile) -> Result<Option<ParetoPoint>> {
    let b = homogeneous_context(workload.max_tokens());
    let Ok(batch) = gpu.n_max(b) else {
        return Ok(None);
    };
    let service = ServiceProfile::for_range(gpu, batch, workload, 0.0, workload.max_tokens() as f64, space.cells)?;
    let plan = size_pool(gpu, b, workload.arrival_rate, service, space);
    Ok(Some(ParetoPoint::assemble(b, 1.0, plan, None)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Every evaluated candidate, best first.
    pub points: Vec<ParetoPoint>,
    pub homogeneous_baseline: Option<ParetoPoint>,
}

/// Phase 1 over the whole space. A feasible homogeneous baseline joins the
/// candidates unless an identical single pool is already among them.
pub fn analytical_sweep(workload: &WorkloadSpec, space: &SweepSpace) -> Result<SweepResult> {
    space.validate()?;
    let mut combos = Vec::new();
    for &b in &space.b_short_grid {
        for gs in &space.gpu_catalog {
            for gl in &space.gpu_catalog {
                if space.allow_mixed_types || gs.name == gl.name {
                    combos.push((b, gs, gl));
                }
            }
        }
    }
    let evaluated: Vec<Option<ParetoPoint>> = combos
        .par_iter()
        .map(|&(b, gs, gl)| evaluate_candidate(workload, space, b, gs, gl))
        .collect::<Result<_>>()?;
    let mut points: Vec<ParetoPoint> = evaluated.into_iter().flatten().collect();

    let baselines: Vec<ParetoPoint> = space
        .gpu_catalog
        .iter()
        .map(|g| homogeneous_point(workload, space, g))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let baseline = baselines
        .iter()
        .filter(|p| p.analytical_slo_pass)
        .min_by(|a, b| rank_cmp(a, b))
        .or_else(|| baselines.iter().min_by(|a, b| rank_cmp(a, b)))
        .cloned();

    if let Some(base) = &baseline {
        let covered = points
            .iter()
            .any(|p| p.is_homogeneous() && p.gpu_s == base.gpu_s && p.n_s == base.n_s);
        if base.analytical_slo_pass && !covered {
            points.push(base.clone());
        }
        for p in &mut points {
            p.saving_vs_baseline = saving(p.annual_cost_usd, base.annual_cost_usd);
        }
    }
    sort_points(&mut points);
    Ok(SweepResult {
        points,
        homogeneous_baseline: baseline,
    })
}

fn saving(cost: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        1.0 - cost / baseline
    } else {
        0.0
    }
}

/// Feasible candidates first, each group in rank order.
fn sort_points(points: &mut [ParetoPoint]) {
    points.sort_by(|a, b| {
        b.analytical_slo_pass
            .cmp(&a.analytical_slo_pass)
            .then_with(|| rank_cmp(a, b))
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesParams {
    pub k: usize,
    pub n_requests: usize,
    pub seed: u64,
    pub router: RouterConfig,
    pub node_avail: Option<f64>,
}

impl Default for DesParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            n_requests: DEFAULT_VERIFY_REQUESTS,
            seed: 0,
            router: RouterConfig::default(),
            node_avail: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerResult {
    /// Non-dominated candidates ordered by `B_short`.
    pub frontier: Vec<ParetoPoint>,
    /// All candidates with verdicts, best first.
    pub candidates: Vec<ParetoPoint>,
    pub best: Option<ParetoPoint>,
    pub homogeneous_baseline: Option<ParetoPoint>,
    /// No verified candidate met the SLO.
    pub no_verified_plan: bool,
}

pub fn des_verdict(point: &ParetoPoint, workload: &WorkloadSpec, params: &DesParams, slo: f64, seed: u64) -> Result<DesVerdict> {
    let fleet = point.fleet(&params.router);
    let sim = run_sim(&fleet, workload, &SimParams::new(params.n_requests, seed).with_slo(slo))?;
    Ok(DesVerdict {
        seed,
        p99_ttft: sim.p99_ttft(),
        pool_p99_ttft: sim.pools.iter().map(|p| p.p99_ttft()).collect(),
        slo_attainment: sim.fleet.slo_attainment,
        rejected: sim.rejected,
        pass: sim.rejected == 0 && sim.meets_slo(slo),
    })
}

/// Phase 2: simulates the `k` cheapest analytically feasible candidates.
pub fn verify_top_k(
    sweep: SweepResult,
    workload: &WorkloadSpec,
    slo: f64,
    params: &DesParams,
) -> Result<OptimizerResult> {
    let SweepResult {
        mut points,
        homogeneous_baseline,
    } = sweep;
    let k = params.k.max(1);
    let targets: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.analytical_slo_pass)
        .map(|(i, _)| i)
        .take(k)
        .collect();
    let verdicts: Vec<DesVerdict> = targets
        .par_iter()
        .enumerate()
        .map(|(rank, &i)| des_verdict(&points[i], workload, params, slo, params.seed.wrapping_add(rank as u64)))
        .collect::<Result<_>>()?;
    for (&i, v) in targets.iter().zip(verdicts) {
        points[i].des = Some(v);
    }
    if let Some(a) = params.node_avail {
        for p in &mut points {
            p.production = Some(production(p, a)?);
        }
    }
    let best = targets
        .iter()
        .map(|&i| &points[i])
        .find(|p| p.slo_pass())
        .cloned();
    let frontier = pareto_frontier(&points);
    Ok(OptimizerResult {
        frontier,
        no_verified_plan: best.is_none(),
        best,
        candidates: points,
        homogeneous_baseline,
    })
}

fn production(p: &ParetoPoint, availability: f64) -> Result<ProductionCounts> {
    let n_s = production_count(p.n_s, availability)?;
    let n_l = if p.n_l == 0 { 0 } else { production_count(p.n_l, availability)? };
    let cost_l = p.long.as_ref().map_or(0.0, |l| l.profile.annual_cost_usd);
    Ok(ProductionCounts {
        availability,
        n_s,
        n_l,
        annual_cost_usd: n_s as f64 * p.short.profile.annual_cost_usd + n_l as f64 * cost_l,
    })
}

/// Runs both phases.
pub fn optimize(workload: &WorkloadSpec, space: &SweepSpace, params: &DesParams) -> Result<OptimizerResult> {
    let sweep = analytical_sweep(workload, space)?;
    verify_top_k(sweep, workload, space.slo_p99_ttft, params)
}

fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    let (pa, pb) = (a.slo_pass(), b.slo_pass());
    let no_worse = a.annual_cost_usd <= b.annual_cost_usd && pa >= pb && a.total_gpus <= b.total_gpus;
    let better = a.annual_cost_usd < b.annual_cost_usd || (pa && !pb) || a.total_gpus < b.total_gpus;
    no_worse && better
}

/// Non-dominated subset under (cost, SLO verdict, total GPUs), stably
/// ordered by `B_short`.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut out: Vec<ParetoPoint> = points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect();
    out.sort_by_key(|p| p.b_short);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhatIfRow {
    pub lambda: f64,
    pub best: Option<ParetoPoint>,
    /// Arrival rate at which the chosen fleet first fails analytically.
    pub headroom_lambda: Option<f64>,
}

impl WhatIfRow {
    pub fn total_gpus(&self) -> Option<u32> {
        self.best.as_ref().map(|p| p.total_gpus)
    }
}

/// Analytical check of a fixed fleet at a different arrival rate. Service
/// moments do not depend on the rate, so each pool's are reused.
pub fn fixed_fleet_passes(point: &ParetoPoint, space: &SweepSpace, lambda: f64) -> bool {
    let check = |plan: &PoolPlan, share: f64| {
        if share <= 0.0 {
            return true;
        }
        let stats = w99(&PoolLoad {
            lambda: lambda * share,
            mean_service: plan.mean_service,
            scv: plan.scv,
            servers: plan.servers,
        });
        stats.stable
            && stats.rho <= space.rho_cap
            && plan.profile.ttft_at(stats.w99, plan.p99_l_in, plan.batch) <= space.slo_p99_ttft
    };
    match &point.long {
        Some(l) => check(&point.short, point.alpha_s) && check(l, 1.0 - point.alpha_s),
        None => check(&point.short, 1.0),
    }
}

/// First arrival rate above `from` where the fleet fails, by bisection.
pub fn headroom_lambda(point: &ParetoPoint, space: &SweepSpace, from: f64) -> Option<f64> {
    if !fixed_fleet_passes(point, space, from) {
        return Some(from);
    }
    let mut lo = from;
    let mut hi = from * 2.0;
    while fixed_fleet_passes(point, space, hi) {
        lo = hi;
        hi *= 2.0;
        if hi > from * 1e6 {
            return None;
        }
    }
    while hi - lo > 1e-3 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if fixed_fleet_passes(point, space, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Minimal verified fleet per arrival rate, with the rate at which that
/// fleet runs out of headroom. The grid must be strictly ascending.
pub fn whatif_lambda_sweep(
    workload: &WorkloadSpec,
    space: &SweepSpace,
    lambda_grid: &[f64],
    params: &DesParams,
) -> Result<Vec<WhatIfRow>> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if lambda_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("lambda grid must be strictly ascending".into()));
    }
    lambda_grid
        .iter()
        .map(|&lambda| {
            let w = workload.with_rate(lambda)?;
            let res = optimize(&w, space, params)?;
            let headroom = match &res.best {
                Some(p) => headroom_lambda(p, space, lambda),
                None => None,
            };
            Ok(WhatIfRow {
                lambda,
                best: res.best,
                headroom_lambda: headroom,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpu;
    use crate::workload::{builtin, WorkloadCdf};

    fn lmsys(lambda: f64) -> WorkloadSpec {
        WorkloadSpec::from_cdf(builtin::lmsys(), lambda, 0.5).unwrap()
    }

    #[test]
    fn homogeneous_context_rounds_up() {
        assert_eq!(homogeneous_context(65_536), 65_536);
        assert_eq!(homogeneous_context(300_000), 524_288);
        assert_eq!(homogeneous_context(8192), 8192);
        assert_eq!(homogeneous_context(100), 1024);
    }

    #[test]
    fn alpha_matches_cdf_and_cost_is_exact() {
        let w = lmsys(100.0);
        let space = SweepSpace::new(vec![512, 1024, 2048, 4096, 8192, 12288], vec![gpu::a100()], 0.5);
        let res = analytical_sweep(&w, &space).unwrap();
        let swept: Vec<&ParetoPoint> = res.points.iter().filter(|p| p.b_short <= 12288).collect();
        assert_eq!(swept.len(), 6);
        assert!(res.points.iter().any(|p| p.b_short == 65_536 && p.analytical_slo_pass));
        for p in swept {
            assert_eq!(p.alpha_s, w.cdf().fraction_below(p.b_short as f64));
            assert_eq!(p.annual_cost_usd, p.n_s as f64 * 19_400.0 + p.n_l as f64 * 19_400.0);
        }
    }

    #[test]
    fn minimal_counts_are_tight() {
        let w = lmsys(100.0);
        let space = SweepSpace::new(vec![2048, 4096, 8192], vec![gpu::a100()], 0.5);
        let res = analytical_sweep(&w, &space).unwrap();
        for p in res.points.iter().filter(|p| p.analytical_slo_pass) {
            for plan in std::iter::once(&p.short).chain(p.long.as_ref()) {
                if plan.servers <= 1 {
                    continue;
                }
                let fewer = PoolLoad {
                    lambda: plan.lambda,
                    mean_service: plan.mean_service,
                    scv: plan.scv,
                    servers: plan.servers - 1,
                };
                let s = w99(&fewer);
                let ok = s.stable
                    && s.rho <= space.rho_cap
                    && plan.profile.ttft_at(s.w99, plan.p99_l_in, plan.batch) <= space.slo_p99_ttft;
                assert!(!ok, "{} pool at b={} not minimal", plan.gpu, p.b_short);
            }
        }
    }

    #[test]
    fn single_point_cdf_degenerates_to_one_pool() {
        let cdf = WorkloadCdf::new("pt", &[(1.0, 300)]).unwrap();
        let w = WorkloadSpec::from_cdf(cdf, 50.0, 0.5).unwrap();
        let space = SweepSpace::new(vec![512], vec![gpu::a100()], 0.5);
        let res = analytical_sweep(&w, &space).unwrap();
        let p = &res.points[0];
        assert_eq!(p.n_l, 0);
        assert!(p.long.is_none());
        assert_eq!(p.alpha_s, 1.0);
    }

    #[test]
    fn agent_split_at_32k_is_prefill_bound() {
        let w = WorkloadSpec::from_cdf(builtin::agent(), 200.0, 0.9).unwrap();
        let space = SweepSpace::new(vec![32_768], vec![gpu::a100()], 0.5);
        let res = analytical_sweep(&w, &space).unwrap();
        let p = &res.points[0];
        assert!(!p.analytical_slo_pass);
        assert!(p.cause().unwrap().contains("prefill-bound"), "{:?}", p.cause());
    }

    #[test]
    fn zero_slo_is_infeasible() {
        let w = lmsys(100.0);
        let space = SweepSpace::new(vec![4096], vec![gpu::a100()], 0.0);
        let res = optimize(&w, &space, &DesParams::default()).unwrap();
        assert!(res.best.is_none() && res.no_verified_plan);
    }

    fn point(b: u64, cost_units: u32, gpus: u32, pass: bool) -> ParetoPoint {
        let w = lmsys(10.0);
        let space = SweepSpace::new(vec![b], vec![gpu::a100()], 0.5);
        let mut p = evaluate_candidate(&w, &space, b, &gpu::a100(), &gpu::a100()).unwrap().unwrap();
        p.annual_cost_usd = cost_units as f64;
        p.total_gpus = gpus;
        p.analytical_slo_pass = pass;
        p
    }

    #[test]
    fn frontier_examples() {
        let one = vec![point(4096, 10, 5, true)];
        assert_eq!(pareto_frontier(&one).len(), 1);
        let two = vec![point(2048, 10, 5, false), point(4096, 10, 5, true)];
        let f = pareto_frontier(&two);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].b_short, 4096);
    }

    #[test]
    fn frontier_against_brute_force() {
        // Table-1-shaped rows: (b_short, cost in $K, GPUs, pass)
        let rows = [
            (512, 290, 15, true),
            (1024, 232, 12, true),
            (2048, 174, 9, true),
            (4096, 155, 8, true),
            (8192, 155, 8, true),
            (12288, 155, 8, true),
        ];
        let pts: Vec<ParetoPoint> = rows.iter().map(|&(b, c, g, s)| point(b, c, g, s)).collect();
        let f = pareto_frontier(&pts);
        let kept: Vec<u64> = f.iter().map(|p| p.b_short).collect();
        let expected: Vec<u64> = rows
            .iter()
            .filter(|r| !rows.iter().any(|q| q.1 <= r.1 && q.2 <= r.2 && (q.1 < r.1 || q.2 < r.2)))
            .map(|r| r.0)
            .collect();
        assert_eq!(kept, expected);
        assert_eq!(kept, vec![4096, 8192, 12288]);
    }

    #[test]
    fn whatif_rejects_bad_grids() {
        let w = lmsys(10.0);
        let space = SweepSpace::new(vec![4096], vec![gpu::a100()], 0.5);
        let p = DesParams::default();
        assert!(whatif_lambda_sweep(&w, &space, &[20.0, 10.0], &p).is_err());
        assert!(whatif_lambda_sweep(&w, &space, &[], &p).is_err());
    }

    #[test]
    fn headroom_sits_above_sizing_rate() {
        let w = WorkloadSpec::from_cdf(builtin::azure(), 200.0, 0.7).unwrap();
        let space = SweepSpace::new(vec![8192], vec![gpu::h100()], 0.5);
        let res = analytical_sweep(&w, &space).unwrap();
        let p = res.points.iter().find(|p| p.analytical_slo_pass).unwrap();
        let h = headroom_lambda(p, &space, 200.0).unwrap();
        assert!(h > 200.0);
        assert!(!fixed_fleet_passes(p, &space, h * 1.001));
        assert!(fixed_fleet_passes(p, &space, h * 0.99));
    }

    #[test]
    fn full_grid_sweep_is_fast() {
        let space = SweepSpace::new(vec![512, 1024, 2048, 4096, 8192, 12288], gpu::builtin_profiles(), 0.5).mixed(true);
        let start = std::time::Instant::now();
        let res = analytical_sweep(&lmsys(100.0), &space).unwrap();
        assert!(!res.points.is_empty());
        assert!(start.elapsed().as_secs_f64() < 1.0, "{:?}", start.elapsed());
    }
}
