//! Request-level discrete-event simulation of a multi-pool fleet.
//!
//! Each pool exposes `gpu_count * n_max` fungible KV slots behind a single
//! FIFO queue. A request holds one slot for its batched service time; its TTFT
//! is the queue wait plus chunked prefill plus one iteration.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpu::GpuProfile;
use crate::routing::{PoolView, Request, Router, RouterConfig};
use crate::workload::WorkloadSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolConfig {
    pub gpu: GpuProfile,
    pub gpu_count: u32,
    pub context_bound: u64,
    /// Caps concurrent sequences per GPU below `n_max`.
    pub batch_cap: Option<u32>,
}

impl PoolConfig {
    pub fn new(gpu: GpuProfile, gpu_count: u32, context_bound: u64) -> Self {
        Self {
            gpu,
            gpu_count,
            context_bound,
            batch_cap: None,
        }
    }

    pub fn with_batch_cap(mut self, cap: u32) -> Self {
        self.batch_cap = Some(cap);
        self
    }

    pub fn n_max(&self) -> Result<u32> {
        self.gpu.n_max(self.context_bound)
    }

    /// Concurrent sequences per GPU after the optional cap.
    pub fn batch(&self) -> Result<u32> {
        let n = self.n_max()?;
        Ok(self.batch_cap.map_or(n, |c| c.clamp(1, n)))
    }

    pub fn slots(&self) -> Result<u64> {
        Ok(self.gpu_count as u64 * self.batch()? as u64)
    }

    pub fn annual_cost(&self) -> f64 {
        self.gpu_count as f64 * self.gpu.annual_cost_usd
    }

    fn validate(&self) -> Result<()> {
        if self.gpu_count < 1 {
            return Err(Error::InvalidFleet(format!(
                "pool on {} has no GPUs",
                self.gpu.name
            )));
        }
        if self.batch_cap == Some(0) {
            return Err(Error::InvalidFleet("batch cap must be >= 1".into()));
        }
        self.n_max().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FleetConfig {
    pub pools: Vec<PoolConfig>,
    pub router: RouterConfig,
}

impl FleetConfig {
    pub fn new(pools: Vec<PoolConfig>, router: RouterConfig) -> Self {
        Self { pools, router }
    }

    pub fn single(pool: PoolConfig) -> Self {
        Self::new(vec![pool], RouterConfig::default())
    }

    pub fn total_gpus(&self) -> u32 {
        self.pools.iter().map(|p| p.gpu_count).sum()
    }

    pub fn annual_cost(&self) -> f64 {
        self.pools.iter().map(PoolConfig::annual_cost).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pools.is_empty() {
            return Err(Error::InvalidFleet("fleet has no pools".into()));
        }
        for p in &self.pools {
            p.validate()?;
        }
        self.bind_router().map(|_| ())
    }

    fn bind_router(&self) -> Result<Router> {
        let views = self
            .pools
            .iter()
            .map(|p| {
                Ok(PoolView {
                    context_bound: p.context_bound,
                    slots: p.slots()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Router::bind(&self.router, &views)
    }
}

/// What to do with a request whose (effective) length exceeds its pool's
/// context bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    #[default]
    Reject,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Warmup {
    /// `max(100, 1% of N)` completions, skipped when that would leave fewer
    /// than half the run.
    #[default]
    Auto,
    None,
    Count(usize),
}

impl Warmup {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            Self::None => 0,
            Self::Count(k) => k.min(n.saturating_sub(1)),
            Self::Auto => {
                let w = (n / 100).max(100);
                if n > 2 * w {
                    w
                } else {
                    0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub n_requests: usize,
    pub seed: u64,
    pub warmup: Warmup,
    /// Generate arrivals for this many seconds instead of `n_requests`, then
    /// drain; statistics cover every request of the window.
    pub window_s: Option<f64>,
    pub overflow: OverflowPolicy,
    /// P99 TTFT target used for the attainment fraction.
    pub slo_s: Option<f64>,
    pub record_trace: bool,
    /// Stop at the last arrival instead of serving the queue to empty.
    pub no_drain: bool,
}

impl SimParams {
    pub fn new(n_requests: usize, seed: u64) -> Self {
        Self {
            n_requests,
            seed,
            warmup: Warmup::Auto,
            window_s: None,
            overflow: OverflowPolicy::Reject,
            slo_s: None,
            record_trace: false,
            no_drain: false,
        }
    }

    pub fn windowed(window_s: f64, seed: u64) -> Self {
        Self {
            window_s: Some(window_s),
            warmup: Warmup::None,
            ..Self::new(0, seed)
        }
    }

    pub fn with_slo(mut self, slo_s: f64) -> Self {
        self.slo_s = Some(slo_s);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }
}

/// Nearest-rank percentile: the sample at rank `ceil(p/100 * N)`.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("percentile of an empty sample".into()));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside (0, 100]")));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, p))
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencySummary {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &mut [f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_by(f64::total_cmp);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Some(Self {
            mean,
            p50: percentile_sorted(samples, 50.0),
            p90: percentile_sorted(samples, 90.0),
            p99: percentile_sorted(samples, 99.0),
            max: *samples.last().expect("nonempty"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolStats {
    pub label: String,
    pub gpu_count: u32,
    pub slots: u64,
    /// Requests routed to this pool (including warm-up).
    pub routed: u64,
    /// Requests contributing to the latency summaries.
    pub measured: u64,
    pub queue_wait: Option<LatencySummary>,
    pub ttft: Option<LatencySummary>,
    pub e2e: Option<LatencySummary>,
    /// Busy slot-seconds over available slot-seconds.
    pub utilization: f64,
    pub slo_attainment: Option<f64>,
}

impl PoolStats {
    pub fn p99_ttft(&self) -> f64 {
        self.ttft.map_or(0.0, |t| t.p99)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub id: u64,
    pub arrival_s: f64,
    pub pool: usize,
    pub queue_wait_s: f64,
    pub ttft_s: f64,
    pub e2e_s: f64,
    pub l_in: u64,
    pub l_out: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FleetSimResult {
    pub pools: Vec<PoolStats>,
    pub fleet: PoolStats,
    pub arrivals: u64,
    pub completed: u64,
    pub rejected: u64,
    pub in_flight: u64,
    pub warmup: u64,
    pub seed: u64,
    /// Simulated time at the last processed event.
    pub horizon_s: f64,
    #[serde(skip)]
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl FleetSimResult {
    pub fn p99_ttft(&self) -> f64 {
        self.fleet.p99_ttft()
    }

    pub fn meets_slo(&self, slo_s: f64) -> bool {
        self.fleet.ttft.is_some() && self.p99_ttft() <= slo_s
    }

    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Completion,
    Arrival,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    id: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        let rank = |k: EventKind| match k {
            EventKind::Completion => 0u8,
            EventKind::Arrival => 1,
        };
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| rank(other.kind).cmp(&rank(self.kind)))
            .then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Debug, Clone)]
struct Record {
    arrival: f64,
    pool: usize,
    l_in: u64,
    l_out: u64,
    start: f64,
    service: f64,
    ttft: f64,
    completed: bool,
    rejected: bool,
    completion_rank: usize,
}

struct PoolState {
    free: u64,
    queue: VecDeque<usize>,
    busy_time: f64,
    batch: u32,
}

/// Runs one simulation. Identical inputs give bit-identical results.
pub fn run_sim(fleet: &FleetConfig, workload: &WorkloadSpec, params: &SimParams) -> Result<FleetSimResult> {
    let started = Instant::now();
    fleet.validate()?;
    let windowed = params.window_s.is_some();
    if let Some(w) = params.window_s {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidArgument(format!("window must be positive, got {w}")));
        }
    } else if params.n_requests < 1 {
        return Err(Error::InvalidArgument("n_requests must be >= 1".into()));
    }
    let router = fleet.bind_router()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gap = Exp::new(workload.arrival_rate)
        .map_err(|e| Error::InvalidWorkload(format!("arrival rate: {e}")))?;

    let mut pools: Vec<PoolState> = fleet
        .pools
        .iter()
        .map(|p| {
            Ok(PoolState {
                free: p.slots()?,
                queue: VecDeque::new(),
                busy_time: 0.0,
                batch: p.batch()?,
            })
        })
        .collect::<Result<_>>()?;

    let capacity = if windowed {
        (workload.arrival_rate * params.window_s.unwrap_or(0.0) * 1.1) as usize + 16
    } else {
        params.n_requests
    };
    let mut records: Vec<Record> = Vec::with_capacity(capacity);
    let mut heap: BinaryHeap<Event> = BinaryHeap::new();
    let mut clock = 0.0f64;
    let mut next_arrival = gap.sample(&mut rng);
    let more_arrivals = |count: usize, t: f64| match params.window_s {
        Some(w) => t <= w,
        None => count < params.n_requests,
    };
    let mut pending_arrival = more_arrivals(0, next_arrival);
    if pending_arrival {
        heap.push(Event {
            time: next_arrival,
            kind: EventKind::Arrival,
            id: 0,
        });
    }
    let mut completed = 0usize;
    let mut rejected = 0u64;

    let start_service = |idx: usize,
                         now: f64,
                         records: &mut Vec<Record>,
                         pool: &mut PoolState,
                         heap: &mut BinaryHeap<Event>| {
        let gpu = &fleet.pools[records[idx].pool].gpu;
        let r = &mut records[idx];
        r.start = now;
        r.service = gpu.service_time_at(r.l_in, r.l_out, pool.batch);
        r.ttft = (now - r.arrival) + gpu.prefill_time_at(r.l_in, pool.batch) + gpu.t_iter(pool.batch);
        pool.free -= 1;
        heap.push(Event {
            time: now + r.service,
            kind: EventKind::Completion,
            id: idx,
        });
    };

    while let Some(ev) = heap.pop() {
        if params.no_drain && !pending_arrival {
            break;
        }
        clock = ev.time;
        match ev.kind {
            EventKind::Arrival => {
                let id = ev.id;
                let lengths = workload.sample_length(&mut rng);
                let model_tag = workload.sample_model_tag(&mut rng);
                let req = Request {
                    id: id as u64,
                    arrival_time: clock,
                    lengths,
                    model_tag,
                };
                let decision = router.route(&req, &mut rng)?;
                let eff = decision.effective;
                let fits = fleet
                    .pools
                    .get(decision.pool_index)
                    .is_some_and(|p| eff.total() <= p.context_bound);
                records.push(Record {
                    arrival: clock,
                    pool: decision.pool_index,
                    l_in: eff.l_in,
                    l_out: eff.l_out,
                    start: f64::NAN,
                    service: 0.0,
                    ttft: f64::NAN,
                    completed: false,
                    rejected: !fits,
                    completion_rank: usize::MAX,
                });
                if !fits {
                    if params.overflow == OverflowPolicy::Error {
                        return Err(Error::Unroutable {
                            id: id as u64,
                            tokens: eff.total(),
                        });
                    }
                    rejected += 1;
                } else {
                    let pool = &mut pools[decision.pool_index];
                    if pool.free > 0 {
                        start_service(id, clock, &mut records, pool, &mut heap);
                    } else {
                        pool.queue.push_back(id);
                    }
                }
                next_arrival = clock + gap.sample(&mut rng);
                pending_arrival = more_arrivals(id + 1, next_arrival);
                if pending_arrival {
                    heap.push(Event {
                        time: next_arrival,
                        kind: EventKind::Arrival,
                        id: id + 1,
                    });
                }
            }
            EventKind::Completion => {
                let idx = ev.id;
                let p = records[idx].pool;
                records[idx].completed = true;
                records[idx].completion_rank = completed;
                completed += 1;
                let pool = &mut pools[p];
                pool.busy_time += records[idx].service;
                pool.free += 1;
                if let Some(next) = pool.queue.pop_front() {
                    start_service(next, clock, &mut records, pool, &mut heap);
                }
            }
        }
    }

    let arrivals = records.len() as u64;
    let in_flight = arrivals - completed as u64 - rejected;
    let warmup = if windowed {
        0
    } else {
        params.warmup.resolve(records.len())
    };
    let horizon = clock;

    let measured = |r: &Record| r.completed && r.completion_rank >= warmup;
    let summarize = |label: String, gpu_count: u32, slots: u64, busy: f64, filter: &dyn Fn(&Record) -> bool| {
        let routed = records.iter().filter(|r| !r.rejected && filter(r)).count() as u64;
        let sel: Vec<&Record> = records.iter().filter(|r| measured(r) && filter(r)).collect();
        let mut waits: Vec<f64> = sel.iter().map(|r| r.start - r.arrival).collect();
        let mut ttfts: Vec<f64> = sel.iter().map(|r| r.ttft).collect();
        let mut e2es: Vec<f64> = sel.iter().map(|r| r.start - r.arrival + r.service).collect();
        let slo_attainment = params.slo_s.filter(|_| !ttfts.is_empty()).map(|slo| {
            ttfts.iter().filter(|&&t| t <= slo).count() as f64 / ttfts.len() as f64
        });
        let utilization = if horizon > 0.0 && slots > 0 {
            busy / (slots as f64 * horizon)
        } else {
            0.0
        };
        PoolStats {
            label,
            gpu_count,
            slots,
            routed,
            measured: sel.len() as u64,
            queue_wait: LatencySummary::from_samples(&mut waits),
            ttft: LatencySummary::from_samples(&mut ttfts),
            e2e: LatencySummary::from_samples(&mut e2es),
            utilization,
            slo_attainment,
        }
    };

    let mut pool_stats = Vec::with_capacity(fleet.pools.len());
    for (i, (cfg, st)) in fleet.pools.iter().zip(&pools).enumerate() {
        let label = format!("{}x{}@{}", cfg.gpu_count, cfg.gpu.name, cfg.context_bound);
        pool_stats.push(summarize(label, cfg.gpu_count, cfg.slots()?, st.busy_time, &|r: &Record| r.pool == i));
    }
    let total_slots: u64 = pool_stats.iter().map(|p| p.slots).sum();
    let total_busy: f64 = pools.iter().map(|p| p.busy_time).sum();
    let fleet_stats = summarize("fleet".into(), fleet.total_gpus(), total_slots, total_busy, &|_: &Record| true);

    let trace = if params.record_trace {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.completed)
            .map(|(i, r)| TraceRow {
                id: i as u64,
                arrival_s: r.arrival,
                pool: r.pool,
                queue_wait_s: r.start - r.arrival,
                ttft_s: r.ttft,
                e2e_s: r.start - r.arrival + r.service,
                l_in: r.l_in,
                l_out: r.l_out,
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(FleetSimResult {
        pools: pool_stats,
        fleet: fleet_stats,
        arrivals,
        completed: completed as u64,
        rejected,
        in_flight,
        warmup: warmup as u64,
        seed: params.seed,
        horizon_s: horizon,
        wall_clock_s: started.elapsed().as_secs_f64(),
        trace,
    })
}
