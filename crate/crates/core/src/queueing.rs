//! Analytical M/G/c layer: Erlang-C and the Kimura two-moment P99 wait.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gpu::GpuProfile;
use crate::workload::{conditional_moments, conditional_quantile, WorkloadSpec};

/// Offered traffic on one pool of identical servers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolLoad {
    /// Arrivals per second.
    pub lambda: f64,
    /// `E[S]` in seconds.
    pub mean_service: f64,
    /// Squared coefficient of variation of service time.
    pub scv: f64,
    pub servers: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueStats {
    pub rho: f64,
    pub wait_prob: f64,
    /// P99 queue wait in seconds; infinite when unstable.
    pub w99: f64,
    pub stable: bool,
}

impl PoolLoad {
    pub fn new(lambda: f64, mean_service: f64, scv: f64, servers: u32) -> Result<Self> {
        let load = Self {
            lambda,
            mean_service,
            scv,
            servers,
        };
        load.validate()?;
        Ok(load)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda = {}", self.lambda)));
        }
        if !(self.mean_service.is_finite() && self.mean_service > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean service = {}",
                self.mean_service
            )));
        }
        if !(self.scv.is_finite() && self.scv >= 0.0) {
            return Err(Error::InvalidArgument(format!("scv = {}", self.scv)));
        }
        if self.servers < 1 {
            return Err(Error::InvalidArgument("servers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn offered_load(&self) -> f64 {
        self.lambda * self.mean_service
    }

    pub fn rho(&self) -> f64 {
        self.offered_load() / self.servers as f64
    }

    pub fn with_servers(&self, servers: u32) -> Self {
        Self { servers, ..*self }
    }
}

/// Erlang-B blocking probability for `c` servers at offered load `a`,
/// by the recurrence `B_k = a B_{k-1} / (k + a B_{k-1})`.
pub fn erlang_b(c: u32, a: f64) -> f64 {
    let mut b = 1.0;
    for k in 1..=c {
        let ab = a * b;
        b = ab / (k as f64 + ab);
    }
    b
}

/// Probability that an arrival waits in an M/M/c queue at per-server
/// utilization `rho`.
pub fn erlang_c(c: u32, rho: f64) -> Result<f64> {
    if c < 1 {
        return Err(Error::InvalidArgument("c must be >= 1".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho}")));
    }
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let b = erlang_b(c, c as f64 * rho);
    Ok(b / (1.0 - rho * (1.0 - b)))
}

/// Two-moment P99 queue wait.
pub fn w99(load: &PoolLoad) -> QueueStats {
    let rho = load.rho();
    if rho >= 1.0 {
        return QueueStats {
            rho,
            wait_prob: 1.0,
            w99: f64::INFINITY,
            stable: false,
        };
    }
    let c = load.servers as f64;
    let mu = 1.0 / load.mean_service;
    let wait_prob = erlang_c(load.servers, rho).expect("rho < 1 checked");
    let w = wait_prob / (c * mu * (1.0 - rho)) * (1.0 + load.scv) / 2.0 * 100f64.ln();
    QueueStats {
        rho,
        wait_prob,
        w99: w,
        stable: true,
    }
}

/// Mean queue wait of the M/M/c queue, `C / (c mu - lambda)`.
pub fn mmc_mean_wait(load: &PoolLoad) -> f64 {
    let rho = load.rho();
    if rho >= 1.0 {
        return f64::INFINITY;
    }
    let c = load.servers as f64;
    let wait_prob = erlang_c(load.servers, rho).expect("rho < 1 checked");
    wait_prob / (c / load.mean_service - load.lambda)
}

/// Analytical P99 TTFT of a pool: P99 wait plus the chunked prefill of
/// the pool's P99 prompt and one iteration, all at `batch` concurrent
/// sequences.
pub fn pool_p99_ttft(load: &PoolLoad, profile: &GpuProfile, batch: u32, p99_l_in: u64) -> f64 {
    let stats = w99(load);
    if !stats.stable {
        return f64::INFINITY;
    }
    profile.ttft_at(stats.w99, p99_l_in, batch)
}

/// Per-request service statistics of one pool's share of a workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ServiceProfile {
    /// Concurrent sequences per GPU the service times were computed at.
    pub batch: u32,
    pub mean_service: f64,
    pub scv: f64,
    /// Prompt length of the pool's P99 total budget.
    pub p99_l_in: u64,
}

impl ServiceProfile {
    /// Service moments over totals in `(lo, hi]`, evaluated at `batch`.
    pub fn for_range(
        profile: &GpuProfile,
        batch: u32,
        workload: &WorkloadSpec,
        lo: f64,
        hi: f64,
        cells: usize,
    ) -> Result<Self> {
        let cdf = workload.cdf();
        let (mean_service, scv) = conditional_moments(cdf, lo, hi, cells, |t| {
            let s = workload.split((t.round() as u64).max(1));
            profile.service_time_at(s.l_in, s.l_out, batch)
        })?;
        let p99_total = conditional_quantile(cdf, lo, hi, 0.99)?;
        let p99_l_in = workload.split((p99_total.round() as u64).max(1)).l_in;
        Ok(Self {
            batch,
            mean_service,
            scv,
            p99_l_in,
        })
    }

    /// TTFT with no queueing: prefill of the P99 prompt plus one iteration.
    pub fn ttft_floor(&self, profile: &GpuProfile) -> f64 {
        profile.ttft_at(0.0, self.p99_l_in, self.batch)
    }
}

/// Outcome of the minimal-count search for one pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Sizing {
    Sized {
        servers: u32,
        stats: QueueStats,
        p99_ttft: f64,
    },
    /// Prefill plus one iteration already exceeds the SLO.
    PrefillBound { floor: f64 },
    /// No count up to the bound satisfies both constraints.
    CountBound { max_servers: u32 },
}

impl Sizing {
    pub fn servers(&self) -> Option<u32> {
        match self {
            Self::Sized { servers, .. } => Some(*servers),
            _ => None,
        }
    }
}

/// Smallest server count with `rho <= rho_cap` and analytical P99 TTFT at or
/// under `slo`.
pub fn min_servers(
    lambda: f64,
    service: &ServiceProfile,
    profile: &GpuProfile,
    rho_cap: f64,
    slo: f64,
    max_servers: u32,
) -> Sizing {
    let floor = service.ttft_floor(profile);
    if floor > slo {
        return Sizing::PrefillBound { floor };
    }
    let offered = lambda * service.mean_service;
    let start = ((offered / rho_cap).ceil() as u32).max(1);
    let mut c = start;
    // nudge down in case of rounding at the cap boundary
    while c > 1 && offered / (c - 1) as f64 <= rho_cap {
        c -= 1;
    }
    while c <= max_servers {
        let load = PoolLoad {
            lambda,
            mean_service: service.mean_service,
            scv: service.scv,
            servers: c,
        };
        let stats = w99(&load);
        if stats.stable && stats.rho <= rho_cap {
            let p99_ttft = profile.ttft_at(stats.w99, service.p99_l_in, service.batch);
            if p99_ttft <= slo {
                return Sizing::Sized {
                    servers: c,
                    stats,
                    p99_ttft,
                };
            }
        }
        c += 1;
    }
    Sizing::CountBound { max_servers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpu;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    /// Stationary distribution of the truncated M/M/c birth-death chain.
    fn birth_death_wait_prob(c: u32, rho: f64, cap: usize) -> f64 {
        let c_us = c as usize;
        let a = c as f64 * rho;
        let mut p = vec![0.0f64; cap + 1];
        p[0] = 1.0;
        for n in 1..=cap {
            let mu_n = n.min(c_us) as f64;
            p[n] = p[n - 1] * a / mu_n;
            if p[n] < 1e-300 {
                break;
            }
        }
        let z: f64 = p.iter().sum();
        p[c_us..].iter().sum::<f64>() / z
    }

    #[test]
    fn erlang_c_examples() {
        assert_abs_diff_eq!(erlang_c(1, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(erlang_c(2, 0.5).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let sat = erlang_c(2, 0.999).unwrap();
        assert!(sat > 0.99 && sat < 1.0);
        assert!(matches!(erlang_c(3, 1.0), Err(Error::Unstable { .. })));
    }

    #[test]
    fn erlang_c_matches_birth_death_chain() {
        for c in 1..=8 {
            for i in 1..=9 {
                let rho = i as f64 / 10.0;
                let exact = birth_death_wait_prob(c, rho, 100_000);
                assert_relative_eq!(erlang_c(c, rho).unwrap(), exact, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn erlang_c_large_c_is_finite() {
        let v = erlang_c(10_000, 0.99).unwrap();
        assert!(v.is_finite() && v > 0.0 && v < 1.0);
    }

    #[test]
    fn w99_examples() {
        let load = PoolLoad::new(1.0, 1.0, 1.0, 2).unwrap();
        let s = w99(&load);
        assert!(s.stable);
        assert_abs_diff_eq!(s.w99, (1.0 / 3.0) / 1.0 * 100f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.w99, 1.535, epsilon = 1e-3);
        let tripled = w99(&PoolLoad { scv: 3.0, ..load });
        assert_abs_diff_eq!(tripled.w99, 2.0 * s.w99, epsilon = 1e-12);
        let unstable = w99(&PoolLoad::new(2.0, 1.0, 1.0, 2).unwrap());
        assert!(!unstable.stable && unstable.w99.is_infinite());
    }

    #[test]
    fn ttft_zero_traffic_is_prefill_plus_iteration() {
        let p = gpu::a100();
        let load = PoolLoad::new(0.0, 0.3, 1.0, 4).unwrap();
        let t = pool_p99_ttft(&load, &p, 128, 512);
        assert_abs_diff_eq!(t, 0.1824, epsilon = 1e-12);
    }

    #[test]
    fn agent_tail_prefill_exceeds_slo() {
        // 32K context on A100: 32 slots; a 12K-token prompt is 24 chunks.
        let p = gpu::a100();
        let n = p.n_max(32_768).unwrap();
        let prefill = p.prefill_time_at(12_000, n);
        assert!(prefill > 0.5, "{prefill}");
    }

    proptest! {
        #[test]
        fn erlang_c_monotone_in_rho(c in 1u32..200, r1 in 0.01f64..0.98, dr in 0.001f64..0.01) {
            let lo = erlang_c(c, r1).unwrap();
            let hi = erlang_c(c, r1 + dr).unwrap();
            prop_assert!(hi > lo);
            prop_assert!((0.0..=1.0).contains(&lo));
        }

        #[test]
        fn erlang_c_decreasing_in_c_at_fixed_load(c in 1u32..200, a_frac in 0.05f64..0.95) {
            let a = a_frac * c as f64;
            let here = erlang_c(c, a / c as f64).unwrap();
            let more = erlang_c(c + 1, a / (c + 1) as f64).unwrap();
            prop_assert!(more < here);
        }

        #[test]
        fn w99_monotonicity(
            c in 1u32..64, es in 0.01f64..5.0, scv in 0.0f64..20.0, rho in 0.05f64..0.9
        ) {
            let lambda = rho * c as f64 / es;
            let base = w99(&PoolLoad::new(lambda, es, scv, c).unwrap()).w99;
            let more_lambda = w99(&PoolLoad::new(lambda * 1.05, es, scv, c).unwrap()).w99;
            let more_scv = w99(&PoolLoad::new(lambda, es, scv + 0.5, c).unwrap()).w99;
            let more_c = w99(&PoolLoad::new(lambda, es, scv, c + 1).unwrap()).w99;
            prop_assert!(more_lambda > base);
            prop_assert!(more_scv > base);
            prop_assert!(more_c < base);
        }
    }

    fn min_servers(lambda: f64, es: f64, slo: f64) -> u32 {
        (1..).find(|&c| w99(&PoolLoad::new(lambda, es, 1.0, c).unwrap()).w99 <= slo).unwrap()
    }

    #[test]
    fn server_count_grows_sublinearly() {
        let small = min_servers(25.0, 1.0, 0.05);
        let large = min_servers(400.0, 1.0, 0.05);
        assert!((large as f64) < 16.0 * small as f64, "{small} -> {large}");
    }
}
