//! GPU performance profiles and the single-GPU latency model.
//!
//! A profile is the `(W, H, KV block budget, chunk)` bundle: iteration latency
//! under continuous batching is `W + H * n` for `n` concurrent sequences, and
//! the number of sequences a GPU can hold is set by its PagedAttention block
//! budget and the pool's context bound. Times are stored in milliseconds at
//! the profile boundary and returned in seconds everywhere else.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens per PagedAttention block.
pub const BLOCK_TOKENS: u32 = 16;

/// Logistic GPU power curve in log2 batch space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub p_idle_w: f64,
    /// `P_nom - P_idle`.
    pub p_range_w: f64,
    pub k: f64,
    pub x0: f64,
}

impl PowerCurve {
    /// Power draw in watts at `batch` concurrent sequences.
    pub fn power(&self, batch: f64) -> f64 {
        let x = batch.max(1.0).log2();
        self.p_range_w / (1.0 + (-self.k * (x - self.x0)).exp()) + self.p_idle_w
    }

    pub fn nominal_w(&self) -> f64 {
        self.p_idle_w + self.p_range_w
    }

    fn validate(&self) -> Result<()> {
        let fields = [self.p_idle_w, self.p_range_w, self.k, self.x0];
        if fields.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "power curve fields must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuProfile {
    pub name: String,
    /// Baseline compute per iteration.
    pub w_ms: f64,
    /// Memory-bandwidth cost per concurrent sequence.
    pub h_ms_per_slot: f64,
    /// Number of 16-token KV blocks available for sequences.
    pub kv_block_budget: u64,
    #[serde(default = "default_block_tokens")]
    pub block_tokens: u32,
    /// Prefill chunk size.
    pub chunk_tokens: u32,
    pub vram_gb: f64,
    pub annual_cost_usd: f64,
    #[serde(default)]
    pub hourly_cost_usd: Option<f64>,
    #[serde(default)]
    pub power: Option<PowerCurve>,
}

fn default_block_tokens() -> u32 {
    BLOCK_TOKENS
}

impl GpuProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = self.w_ms.is_finite()
            && self.w_ms > 0.0
            && self.h_ms_per_slot.is_finite()
            && self.h_ms_per_slot > 0.0
            && self.kv_block_budget >= 1
            && self.block_tokens >= 1
            && self.chunk_tokens >= 1
            && self.annual_cost_usd >= 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "profile {} has out-of-range constants",
                self.name
            )));
        }
        if let Some(p) = &self.power {
            p.validate()?;
        }
        Ok(())
    }

    /// Maximum concurrent sequences per GPU at context bound `context`.
    pub fn n_max(&self, context: u64) -> Result<u32> {
        let blocks_per_seq = context.max(1).div_ceil(self.block_tokens as u64);
        let n = self.kv_block_budget / blocks_per_seq;
        if n == 0 {
            return Err(Error::ContextTooLarge {
                gpu: self.name.clone(),
                context,
            });
        }
        Ok(n.min(u32::MAX as u64) as u32)
    }

    /// Iteration latency in seconds with `n` concurrent sequences.
    pub fn t_iter(&self, n: u32) -> f64 {
        self.t_iter_ms(n) / 1000.0
    }

    pub fn t_iter_ms(&self, n: u32) -> f64 {
        self.w_ms + self.h_ms_per_slot * n as f64
    }

    pub fn prefill_chunks(&self, l_in: u64) -> u64 {
        l_in.max(1).div_ceil(self.chunk_tokens as u64)
    }

    /// Per-request service time in seconds when the GPU runs `batch`
    /// concurrent sequences: the request's share of `batch`-wide iterations.
    pub fn service_time_at(&self, l_in: u64, l_out: u64, batch: u32) -> f64 {
        let iterations = (self.prefill_chunks(l_in) + l_out) as f64;
        iterations / batch as f64 * self.t_iter(batch)
    }

    /// Service time at the slot count implied by `context`.
    pub fn service_time(&self, l_in: u64, l_out: u64, context: u64) -> Result<f64> {
        let n = self.n_max(context)?;
        Ok(self.service_time_at(l_in, l_out, n))
    }

    /// Prefill latency in seconds: one chunk per iteration at `batch`.
    pub fn prefill_time_at(&self, l_in: u64, batch: u32) -> f64 {
        self.prefill_chunks(l_in) as f64 * self.t_iter(batch)
    }

    /// Time to first token: queue wait, chunked prefill, and one decode step.
    pub fn ttft_at(&self, queue_wait: f64, l_in: u64, batch: u32) -> f64 {
        queue_wait + self.prefill_time_at(l_in, batch) + self.t_iter(batch)
    }

    pub fn ttft(&self, queue_wait: f64, l_in: u64, context: u64) -> Result<f64> {
        let n = self.n_max(context)?;
        Ok(self.ttft_at(queue_wait, l_in, n))
    }

    /// Power draw at batch size `batch`.
    pub fn power(&self, batch: u32) -> Result<f64> {
        let curve = self
            .power
            .as_ref()
            .ok_or_else(|| Error::MissingPowerCurve(self.name.clone()))?;
        Ok(curve.power(batch.max(1) as f64))
    }
}

/// H100 logistic power curve; idle and range solved from the two published anchors.
pub const H100_POWER: PowerCurve = PowerCurve {
    p_idle_w: 300.0,
    p_range_w: 300.0,
    k: 1.0,
    x0: 4.2,
};

pub fn a10g() -> GpuProfile {
    GpuProfile {
        name: "A10G".into(),
        w_ms: 12.0,
        h_ms_per_slot: 0.90,
        kv_block_budget: 32_768,
        block_tokens: BLOCK_TOKENS,
        chunk_tokens: 512,
        vram_gb: 24.0,
        annual_cost_usd: 8_850.0,
        hourly_cost_usd: None,
        power: None,
    }
}

pub fn a100() -> GpuProfile {
    GpuProfile {
        name: "A100".into(),
        w_ms: 8.0,
        h_ms_per_slot: 0.65,
        kv_block_budget: 65_536,
        block_tokens: BLOCK_TOKENS,
        chunk_tokens: 512,
        vram_gb: 80.0,
        annual_cost_usd: 19_400.0,
        hourly_cost_usd: Some(2.21),
        power: None,
    }
}

pub fn h100() -> GpuProfile {
    GpuProfile {
        name: "H100".into(),
        w_ms: 4.0,
        h_ms_per_slot: 0.32,
        kv_block_budget: 131_072,
        block_tokens: BLOCK_TOKENS,
        chunk_tokens: 1024,
        vram_gb: 80.0,
        annual_cost_usd: 35_200.0,
        hourly_cost_usd: Some(4.02),
        power: Some(H100_POWER),
    }
}

pub fn builtin_profiles() -> Vec<GpuProfile> {
    vec![a10g(), a100(), h100()]
}

/// Partial profile used by override files; absent fields keep their values.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    pub w_ms: Option<f64>,
    pub h_ms_per_slot: Option<f64>,
    pub kv_block_budget: Option<u64>,
    pub block_tokens: Option<u32>,
    pub chunk_tokens: Option<u32>,
    pub vram_gb: Option<f64>,
    pub annual_cost_usd: Option<f64>,
    pub hourly_cost_usd: Option<f64>,
    pub power: Option<PowerCurve>,
}

impl ProfileOverride {
    fn apply(&self, p: &mut GpuProfile) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { p.$f = v; } )*};
        }
        set!(w_ms, h_ms_per_slot, kv_block_budget, block_tokens, chunk_tokens, vram_gb, annual_cost_usd);
        if self.hourly_cost_usd.is_some() {
            p.hourly_cost_usd = self.hourly_cost_usd;
        }
        if self.power.is_some() {
            p.power = self.power;
        }
    }
}

/// A named set of GPU profiles, seeded with the built-ins.
#[derive(Debug, Clone)]
pub struct ProfileCatalog {
    profiles: BTreeMap<String, GpuProfile>,
}

impl Default for ProfileCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ProfileCatalog {
    pub fn builtin() -> Self {
        let profiles = builtin_profiles()
            .into_iter()
            .map(|p| (p.name.clone(), p))
            .collect();
        Self { profiles }
    }

    pub fn get(&self, name: &str) -> Result<&GpuProfile> {
        self.profiles
            .get(name)
            .ok_or_else(|| Error::UnknownProfile(name.to_string()))
    }

    pub fn insert(&mut self, profile: GpuProfile) -> Result<()> {
        profile.validate()?;
        self.profiles.insert(profile.name.clone(), profile);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &GpuProfile> {
        self.profiles.values()
    }

    /// Replaces the fields `ov` sets on an existing profile.
    pub fn override_profile(&mut self, name: &str, ov: &ProfileOverride) -> Result<()> {
        let mut updated = self.get(name)?.clone();
        ov.apply(&mut updated);
        self.insert(updated)
    }

    /// Applies a JSON override document keyed by profile name. Unknown names
    /// must carry every field and are added as new profiles.
    pub fn apply_overrides(&mut self, json: &str) -> Result<()> {
        let doc: BTreeMap<String, serde_json::Value> = serde_json::from_str(json)?;
        for (name, value) in doc {
            if let Some(existing) = self.profiles.get(&name) {
                let ov: ProfileOverride = serde_json::from_value(value)?;
                let mut updated = existing.clone();
                ov.apply(&mut updated);
                self.insert(updated)?;
            } else {
                let mut obj = value;
                if let Some(map) = obj.as_object_mut() {
                    map.entry("name")
                        .or_insert_with(|| serde_json::Value::String(name.clone()));
                }
                let profile: GpuProfile = serde_json::from_value(obj)?;
                self.insert(profile)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn n_max_matches_table() {
        assert_eq!(a10g().n_max(8192).unwrap(), 64);
        assert_eq!(a100().n_max(8192).unwrap(), 128);
        assert_eq!(h100().n_max(8192).unwrap(), 256);
        assert_eq!(a100().n_max(65_536).unwrap(), 16);
        assert_eq!(a100().n_max(8192).unwrap() / a100().n_max(65_536).unwrap(), 8);
    }

    #[test]
    fn n_max_one_block_per_sequence() {
        for p in builtin_profiles() {
            assert_eq!(p.n_max(16).unwrap() as u64, p.kv_block_budget);
            assert_eq!(p.n_max(1).unwrap() as u64, p.kv_block_budget);
        }
    }

    #[test]
    fn n_max_rejects_oversized_context() {
        let err = a10g().n_max(32_768 * 16 + 1).unwrap_err();
        assert!(matches!(err, Error::ContextTooLarge { .. }));
    }

    #[test]
    fn iteration_latency() {
        assert_abs_diff_eq!(a100().t_iter_ms(128), 91.2, epsilon = 1e-9);
        assert_abs_diff_eq!(h100().t_iter_ms(128), 44.96, epsilon = 1e-9);
        assert_abs_diff_eq!(a10g().t_iter_ms(0), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn service_time_examples() {
        let p = a100();
        assert_abs_diff_eq!(p.service_time(512, 512, 8192).unwrap(), 0.3655125, epsilon = 1e-9);
        assert_abs_diff_eq!(p.service_time(512, 1, 8192).unwrap(), 0.001425, epsilon = 1e-12);
        let a = p.service_time(512, 100, 8192).unwrap();
        let b = p.service_time(513, 100, 8192).unwrap();
        assert_abs_diff_eq!(b - a, p.t_iter(128) / 128.0, epsilon = 1e-12);
    }

    #[test]
    fn ttft_examples() {
        let p = a100();
        assert_abs_diff_eq!(p.ttft(0.0, 512, 8192).unwrap(), 0.1824, epsilon = 1e-12);
        assert_abs_diff_eq!(p.ttft(0.0, 1, 8192).unwrap(), 2.0 * p.t_iter(128), epsilon = 1e-12);
        let long = p.ttft(0.0, 32_768, 65_536).unwrap();
        assert_abs_diff_eq!(long, 65.0 * p.t_iter(16), epsilon = 1e-12);
        assert!(p.prefill_time_at(32_768, 16) > 0.5);
    }

    #[test]
    fn power_anchors() {
        let p = h100();
        assert!((p.power(1).unwrap() - 304.0).abs() < 2.0);
        assert!((p.power(48).unwrap() - 540.0).abs() < 2.0);
        assert!((p.power(128).unwrap() - 583.0).abs() < 2.0);
        assert!(matches!(a100().power(8), Err(Error::MissingPowerCurve(_))));
    }

    #[test]
    fn overrides_replace_fields() {
        let mut cat = ProfileCatalog::builtin();
        cat.apply_overrides(r#"{"A100": {"annual_cost_usd": 15000.0}}"#)
            .unwrap();
        let a = cat.get("A100").unwrap();
        assert_eq!(a.annual_cost_usd, 15_000.0);
        assert_eq!(a.w_ms, 8.0);
        assert!(cat
            .apply_overrides(r#"{"A100": {"bogus": 1}}"#)
            .is_err());
    }

    #[test]
    fn logistic_solve_recovers_idle_and_range() {
        let curve = h100().power.unwrap();
        let s = |b: f64| 1.0 / (1.0 + (-(b.log2() - 4.2)).exp());
        let (p1, p128) = (curve.power(1.0), curve.power(128.0));
        // p = idle + range * s(b) at b = 1 and b = 128
        let range = (p128 - p1) / (s(128.0) - s(1.0));
        let idle = p1 - range * s(1.0);
        assert!((idle - 300.0).abs() < 2.0, "{idle}");
        assert!((range - 300.0).abs() < 2.0, "{range}");
    }

    proptest! {
        #[test]
        fn n_max_nonincreasing_in_context(a in 1u64..600_000, b in 1u64..600_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for g in builtin_profiles() {
                if let Ok(n_hi) = g.n_max(hi) {
                    prop_assert!(g.n_max(lo).unwrap() >= n_hi);
                }
            }
        }

        #[test]
        fn latency_monotone(n in 1u32..1024, l_in in 1u64..100_000, l_out in 1u64..10_000, d in 1u64..5000) {
            for g in builtin_profiles() {
                prop_assert!(g.t_iter(n + 1) > g.t_iter(n));
                prop_assert!(g.service_time_at(l_in, l_out + d, n) > g.service_time_at(l_in, l_out, n));
                prop_assert!(g.service_time_at(l_in + d, l_out, n) >= g.service_time_at(l_in, l_out, n));
            }
        }

        #[test]
        fn power_increasing_and_bounded(b in 1u32..4096) {
            let g = h100();
            let c = g.power.unwrap();
            let (p, q) = (g.power(b).unwrap(), g.power(b + 1).unwrap());
            prop_assert!(q > p);
            prop_assert!(p > c.p_idle_w && p < c.nominal_w());
        }
    }
}
