//! Disaggregated prefill/decode sizing.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gpu::GpuProfile;
use crate::queueing::{w99, PoolLoad};
use crate::workload::{conditional_moments, conditional_quantile, WorkloadSpec, DEFAULT_CELLS};

/// Prefill-time multiplier for the KV-cache transfer to the decode pool.
pub const BETA_TTFT: f64 = 1.80;
pub const DEFAULT_DECODE_BATCH: u32 = 128;
/// Concurrent prefills per prefill worker.
pub const DEFAULT_PREFILL_BATCH: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisaggConfig {
    pub prefill_gpu: String,
    pub decode_gpu: String,
    pub n_prefill: u32,
    pub n_decode: u32,
    pub prefill_batch: u32,
    pub decode_batch: u32,
    pub beta_ttft: f64,
}

impl DisaggConfig {
    pub fn label(&self) -> String {
        format!("{}P + {}D", self.prefill_gpu, self.decode_gpu)
    }

    pub fn gpus_label(&self) -> String {
        format!("{} ({}P+{}D)", self.n_prefill + self.n_decode, self.n_prefill, self.n_decode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DisaggCause {
    /// Transfer-inflated prefill of the P99 prompt already misses the TTFT SLO.
    TtftBound,
    TpotBound,
    /// No pool size within the bound meets the utilization cap and SLO.
    ThroughputBound,
}

impl DisaggCause {
    pub fn label(&self) -> &'static str {
        match self {
            Self::TtftBound => "ttft-bound",
            Self::TpotBound => "tpot-bound",
            Self::ThroughputBound => "throughput-bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisaggResult {
    pub config: DisaggConfig,
    pub ttft_p99: f64,
    pub tpot: f64,
    pub annual_cost_usd: f64,
    pub prefill_rho: f64,
    pub decode_rho: f64,
    pub cause: Option<DisaggCause>,
}

impl DisaggResult {
    pub fn feasible(&self) -> bool {
        self.cause.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggParams {
    pub prefill_batch: u32,
    pub decode_batch: u32,
    pub beta_ttft: f64,
    pub rho_cap: f64,
    pub max_gpus_per_pool: u32,
    pub cells: usize,
}

impl Default for DisaggParams {
    fn default() -> Self {
        Self {
            prefill_batch: DEFAULT_PREFILL_BATCH,
            decode_batch: DEFAULT_DECODE_BATCH,
            beta_ttft: BETA_TTFT,
            rho_cap: crate::optimizer::DEFAULT_RHO_CAP,
            max_gpus_per_pool: crate::optimizer::DEFAULT_MAX_GPUS_PER_POOL,
            cells: DEFAULT_CELLS,
        }
    }
}

impl DisaggParams {
    pub fn validate(&self) -> Result<()> {
        if self.prefill_batch < 1 || self.decode_batch < 1 {
            return Err(Error::InvalidArgument("prefill and decode batch must be >= 1".into()));
        }
        if !(self.beta_ttft >= 1.0) || !self.beta_ttft.is_finite() {
            return Err(Error::InvalidArgument(format!("beta_ttft must be >= 1, got {}", self.beta_ttft)));
        }
        if !(self.rho_cap > 0.0 && self.rho_cap < 1.0) {
            return Err(Error::InvalidArgument(format!("rho_cap must be in (0, 1), got {}", self.rho_cap)));
        }
        if self.max_gpus_per_pool < 1 {
            return Err(Error::InvalidArgument("max_gpus_per_pool must be >= 1".into()));
        }
        Ok(())
    }
}

/// One decode iteration at `batch`: the per-token latency of every sequence.
pub fn tpot(decode_gpu: &GpuProfile, batch: u32) -> Result<f64> {
    if batch < 1 {
        return Err(Error::InvalidArgument("decode batch must be >= 1".into()));
    }
    Ok(decode_gpu.t_iter(batch))
}

/// Requests per second one decode GPU sustains at full occupancy.
pub fn decode_throughput(decode_gpu: &GpuProfile, batch: u32, mean_l_out: f64) -> Result<f64> {
    Ok(batch as f64 / (mean_l_out * tpot(decode_gpu, batch)?))
}

/// Raw prefill of a prompt on a prefill worker.
pub fn raw_prefill(gpu: &GpuProfile, l_in: u64, prefill_batch: u32) -> f64 {
    gpu.prefill_time_at(l_in, prefill_batch)
}

fn decode_count(lambda: f64, mean_l_out: f64, tpot: f64, batch: u32, rho_cap: f64) -> u32 {
    let n = (lambda * mean_l_out * tpot / (batch as f64 * rho_cap)).ceil();
    (n as u32).max(1)
}

/// Sizes one prefill/decode pairing.
pub fn size_pair(
    workload: &WorkloadSpec,
    prefill_gpu: &GpuProfile,
    decode_gpu: &GpuProfile,
    ttft_slo: f64,
    tpot_slo: f64,
    params: &DisaggParams,
) -> Result<DisaggResult> {
    params.validate()?;
    if !(ttft_slo > 0.0 && tpot_slo > 0.0) {
        return Err(Error::InvalidArgument("SLOs must be > 0".into()));
    }
    let lambda = workload.arrival_rate;
    let cdf = workload.cdf();
    let hi = workload.max_tokens() as f64;
    let split = |t: f64| workload.split((t.round() as u64).max(1));

    let (mean_prefill, scv) = conditional_moments(cdf, 0.0, hi, params.cells, |t| {
        raw_prefill(prefill_gpu, split(t).l_in, params.prefill_batch)
    })?;
    let (mean_l_out, _) = conditional_moments(cdf, 0.0, hi, params.cells, |t| split(t).l_out as f64)?;
    let p99_l_in = split(conditional_quantile(cdf, 0.0, hi, 0.99)?).l_in;

    let step = tpot(decode_gpu, params.decode_batch)?;
    let n_decode = decode_count(lambda, mean_l_out, step, params.decode_batch, params.rho_cap);
    let decode_rho = lambda * mean_l_out * step / (n_decode as f64 * params.decode_batch as f64);

    let floor = params.beta_ttft * raw_prefill(prefill_gpu, p99_l_in, params.prefill_batch) + step;
    let ttft_of = |n: u32| {
        let stats = w99(&PoolLoad {
            lambda,
            mean_service: mean_prefill,
            scv,
            servers: n * params.prefill_batch,
        });
        (stats.rho, if stats.stable { stats.w99 + floor } else { f64::INFINITY })
    };

    let slots_needed = lambda * mean_prefill / params.rho_cap;
    let cap_count = ((slots_needed / params.prefill_batch as f64).ceil() as u32).max(1);
    let mut n_prefill = cap_count;
    let mut sized = None;
    while n_prefill <= params.max_gpus_per_pool {
        let (rho, ttft) = ttft_of(n_prefill);
        if rho <= params.rho_cap && ttft <= ttft_slo {
            sized = Some((rho, ttft));
            break;
        }
        n_prefill += 1;
    }

    let cause = if step > tpot_slo {
        Some(DisaggCause::TpotBound)
    } else if floor > ttft_slo {
        Some(DisaggCause::TtftBound)
    } else if sized.is_none() || n_decode > params.max_gpus_per_pool {
        Some(DisaggCause::ThroughputBound)
    } else {
        None
    };
    let (n_prefill, (prefill_rho, ttft_p99)) = match sized {
        Some(s) => (n_prefill, s),
        None => (cap_count, ttft_of(cap_count)),
    };

    Ok(DisaggResult {
        config: DisaggConfig {
            prefill_gpu: prefill_gpu.name.clone(),
            decode_gpu: decode_gpu.name.clone(),
            n_prefill,
            n_decode,
            prefill_batch: params.prefill_batch,
            decode_batch: params.decode_batch,
            beta_ttft: params.beta_ttft,
        },
        ttft_p99,
        tpot: step,
        annual_cost_usd: n_prefill as f64 * prefill_gpu.annual_cost_usd + n_decode as f64 * decode_gpu.annual_cost_usd,
        prefill_rho,
        decode_rho,
        cause,
    })
}

/// Every ordered GPU pairing, feasible rows first, then by cost.
pub fn size_disagg(
    workload: &WorkloadSpec,
    catalog: &[GpuProfile],
    ttft_slo: f64,
    tpot_slo: f64,
    params: &DisaggParams,
) -> Result<Vec<DisaggResult>> {
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("GPU catalog is empty".into()));
    }
    let pairs: Vec<(&GpuProfile, &GpuProfile)> = catalog
        .iter()
        .flat_map(|p| catalog.iter().map(move |d| (p, d)))
        .collect();
    let mut rows = pairs
        .par_iter()
        .map(|(p, d)| size_pair(workload, p, d, ttft_slo, tpot_slo, params))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        b.feasible()
            .cmp(&a.feasible())
            .then(a.annual_cost_usd.total_cmp(&b.annual_cost_usd))
            .then((a.config.n_prefill + a.config.n_decode).cmp(&(b.config.n_prefill + b.config.n_decode)))
            .then_with(|| a.config.label().cmp(&b.config.label()))
    });
    Ok(rows)
}

pub fn cheapest_feasible(rows: &[DisaggResult]) -> Result<&DisaggResult> {
    rows.iter().find(|r| r.feasible()).ok_or_else(|| {
        let causes: Vec<String> = rows
            .iter()
            .map(|r| format!("{} {}", r.config.label(), r.cause.map_or("", |c| c.label())))
            .collect();
        Error::NotViable(causes.join(", "))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpu;
    use crate::workload::builtin;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn azure() -> WorkloadSpec {
        WorkloadSpec::from_cdf(builtin::azure(), 100.0, 0.92).unwrap()
    }

    fn catalog() -> Vec<GpuProfile> {
        vec![gpu::a100(), gpu::h100()]
    }

    #[test]
    fn tpot_examples() {
        assert_abs_diff_eq!(tpot(&gpu::h100(), 128).unwrap(), 0.04496, epsilon = 1e-12);
        assert_abs_diff_eq!(tpot(&gpu::a100(), 128).unwrap(), 0.0912, epsilon = 1e-12);
        assert!(tpot(&gpu::a100(), 0).is_err());
    }

    #[test]
    fn a100_prefill_h100_decode_is_cheapest() {
        let rows = size_disagg(&azure(), &catalog(), 0.5, 0.1, &DisaggParams::default()).unwrap();
        let best = cheapest_feasible(&rows).unwrap();
        assert_eq!(best.config.label(), "A100P + H100D");
        assert_eq!((best.config.n_prefill, best.config.n_decode), (1, 3));
        assert_eq!(best.annual_cost_usd, 125_000.0);
        assert_abs_diff_eq!(best.tpot, 0.04496, epsilon = 1e-12);
        for r in &rows {
            let p = if r.config.prefill_gpu == "A100" { 19_400.0 } else { 35_200.0 };
            let d = if r.config.decode_gpu == "A100" { 19_400.0 } else { 35_200.0 };
            assert_eq!(r.annual_cost_usd, r.config.n_prefill as f64 * p + r.config.n_decode as f64 * d);
        }
    }

    #[test]
    fn h100_prefill_has_lower_ttft() {
        let w = azure();
        let p = DisaggParams::default();
        let a = size_pair(&w, &gpu::a100(), &gpu::h100(), 0.5, 0.1, &p).unwrap();
        let h = size_pair(&w, &gpu::h100(), &gpu::h100(), 0.5, 0.1, &p).unwrap();
        assert!(h.ttft_p99 < a.ttft_p99);
    }

    #[test]
    fn tight_tpot_rejects_a100_decode() {
        let rows = size_disagg(&azure(), &catalog(), 0.5, 0.04, &DisaggParams::default()).unwrap();
        for r in rows.iter().filter(|r| r.config.decode_gpu == "A100") {
            assert_eq!(r.cause, Some(DisaggCause::TpotBound));
        }
        let rows = size_disagg(&azure(), &catalog(), 0.5, 0.05, &DisaggParams::default()).unwrap();
        for r in &rows {
            assert_eq!(r.cause == Some(DisaggCause::TpotBound), r.config.decode_gpu == "A100");
        }
    }

    #[test]
    fn tiny_ttft_slo_is_not_viable() {
        let rows = size_disagg(&azure(), &catalog(), 0.02, 0.1, &DisaggParams::default()).unwrap();
        assert!(rows.iter().all(|r| r.cause == Some(DisaggCause::TtftBound)));
        assert!(matches!(cheapest_feasible(&rows), Err(Error::NotViable(_))));
    }

    #[test]
    fn decode_throughput_ratio() {
        let r = decode_throughput(&gpu::h100(), 128, 100.0).unwrap() / decode_throughput(&gpu::a100(), 128, 100.0).unwrap();
        assert!((2.0..=2.6).contains(&r), "{r}");
    }

    #[test]
    fn decode_count_matches_occupancy() {
        let w = azure();
        let r = size_pair(&w, &gpu::a100(), &gpu::a100(), 0.5, 0.1, &DisaggParams::default()).unwrap();
        let mean_out: f64 = {
            let cells = crate::workload::conditional_cells(w.cdf(), 0.0, w.max_tokens() as f64, 1024).unwrap();
            cells.iter().map(|&t| w.split((t.round() as u64).max(1)).l_out as f64).sum::<f64>() / cells.len() as f64
        };
        let need = 100.0 * mean_out * 0.0912 / (128.0 * 0.85);
        assert_eq!(r.config.n_decode, need.ceil() as u32);
        assert!(r.decode_rho <= 0.85 + 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        let w = azure();
        let bad = DisaggParams { beta_ttft: 0.5, ..Default::default() };
        assert!(size_pair(&w, &gpu::a100(), &gpu::h100(), 0.5, 0.1, &bad).is_err());
        assert!(size_pair(&w, &gpu::a100(), &gpu::h100(), 0.0, 0.1, &DisaggParams::default()).is_err());
        assert!(size_disagg(&w, &[], 0.5, 0.1, &DisaggParams::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ttft_monotone_in_beta(beta in 1.0f64..3.0, extra in 0.01f64..1.0) {
            let w = azure();
            let lo = DisaggParams { beta_ttft: beta, ..Default::default() };
            let hi = DisaggParams { beta_ttft: beta + extra, ..Default::default() };
            let a = size_pair(&w, &gpu::h100(), &gpu::h100(), 10.0, 0.1, &lo).unwrap();
            let b = size_pair(&w, &gpu::h100(), &gpu::h100(), 10.0, 0.1, &hi).unwrap();
            prop_assert_eq!(a.config.n_prefill, b.config.n_prefill);
            prop_assert!(b.ttft_p99 > a.ttft_p99);
            prop_assert_eq!(a.config.n_decode, b.config.n_decode);
        }

        #[test]
        fn ttft_monotone_in_prompt_share(phi in 0.3f64..0.9, d in 0.02f64..0.09) {
            let p = DisaggParams::default();
            let a = WorkloadSpec::from_cdf(builtin::azure(), 50.0, phi).unwrap();
            let b = WorkloadSpec::from_cdf(builtin::azure(), 50.0, phi + d).unwrap();
            let ra = size_pair(&a, &gpu::a100(), &gpu::h100(), 10.0, 0.1, &p).unwrap();
            let rb = size_pair(&b, &gpu::a100(), &gpu::h100(), 10.0, 0.1, &p).unwrap();
            prop_assert!(rb.ttft_p99 >= ra.ttft_p99 || rb.config.n_prefill > ra.config.n_prefill);
        }
    }
}
