//! Token-length workloads.
//!
//! A [`WorkloadCdf`] is an empirical distribution over a request's total token
//! budget, linearly interpolated on the token axis with an implied origin at
//! `(0, 0)`. It drives traffic splits (`F(B)`), inverse-CDF length sampling in
//! the simulator, and the per-pool service-time moments used by the
//! analytical model.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal, Pareto};

use crate::error::{Error, Result};

/// Minimum number of equal-probability cells used by [`conditional_moments`].
pub const MIN_CELLS: usize = 256;
/// Minimum cells given to each CDF segment inside the range.
pub const SEGMENT_CELLS: usize = 64;
/// Cell count used by the analytical layer.
pub const DEFAULT_CELLS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub cum_prob: f64,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadCdf {
    pub name: String,
    breakpoints: Vec<Breakpoint>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CdfDocument {
    Pairs(Vec<(f64, f64)>),
    Named {
        #[serde(default)]
        name: Option<String>,
        breakpoints: Vec<(f64, f64)>,
    },
    Map(std::collections::BTreeMap<String, f64>),
}

impl WorkloadCdf {
    /// Builds a CDF from `(cum_prob, tokens)` pairs in any order. Pairs are
    /// sorted by probability; the token column must then be strictly
    /// increasing too.
    pub fn new(name: impl Into<String>, pairs: &[(f64, u64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidCdf("no breakpoints".into()));
        }
        let mut bps: Vec<Breakpoint> = pairs
            .iter()
            .map(|&(cum_prob, tokens)| Breakpoint { cum_prob, tokens })
            .collect();
        for bp in &bps {
            if !(bp.cum_prob.is_finite() && bp.cum_prob > 0.0 && bp.cum_prob <= 1.0) {
                return Err(Error::InvalidCdf(format!(
                    "probability {} outside (0, 1]",
                    bp.cum_prob
                )));
            }
            if bp.tokens < 1 {
                return Err(Error::InvalidCdf("token budgets must be >= 1".into()));
            }
        }
        bps.sort_by(|a, b| a.cum_prob.total_cmp(&b.cum_prob));
        for w in bps.windows(2) {
            if w[1].cum_prob <= w[0].cum_prob {
                return Err(Error::InvalidCdf(format!(
                    "duplicate probability {}",
                    w[0].cum_prob
                )));
            }
            if w[1].tokens <= w[0].tokens {
                return Err(Error::InvalidCdf(format!(
                    "token budgets not increasing with probability: {} at p={} vs {} at p={}",
                    w[0].tokens, w[0].cum_prob, w[1].tokens, w[1].cum_prob
                )));
            }
        }
        let last = bps.last().expect("nonempty");
        if (last.cum_prob - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCdf(format!(
                "last cumulative probability is {}, expected 1.0",
                last.cum_prob
            )));
        }
        bps.last_mut().expect("nonempty").cum_prob = 1.0;
        Ok(Self {
            name: name.into(),
            breakpoints: bps,
        })
    }

    /// Parses the JSON CDF format: `[[p, tokens], ...]`,
    /// `{"name": ..., "breakpoints": [[p, tokens], ...]}`, or `{"p": tokens, ...}`.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_named(text, "cdf")
    }

    pub fn from_json_named(text: &str, default_name: &str) -> Result<Self> {
        let doc: CdfDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidCdf(format!("malformed CDF document: {e}")))?;
        let (name, raw) = match doc {
            CdfDocument::Pairs(p) => (default_name.to_string(), p),
            CdfDocument::Named { name, breakpoints } => {
                (name.unwrap_or_else(|| default_name.to_string()), breakpoints)
            }
            CdfDocument::Map(m) => {
                let mut pairs = Vec::with_capacity(m.len());
                for (k, v) in m {
                    let p: f64 = k
                        .parse()
                        .map_err(|_| Error::InvalidCdf(format!("key {k:?} is not a probability")))?;
                    pairs.push((p, v));
                }
                (default_name.to_string(), pairs)
            }
        };
        let mut pairs = Vec::with_capacity(raw.len());
        for (p, t) in raw {
            if !(t.is_finite() && t >= 1.0 && t.fract() == 0.0) {
                return Err(Error::InvalidCdf(format!(
                    "token budget {t} is not a positive integer"
                )));
            }
            pairs.push((p, t as u64));
        }
        Self::new(name, &pairs)
    }

    pub fn to_json(&self) -> String {
        let pairs: Vec<(f64, u64)> = self
            .breakpoints
            .iter()
            .map(|b| (b.cum_prob, b.tokens))
            .collect();
        serde_json::json!({ "name": self.name, "breakpoints": pairs }).to_string()
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn max_tokens(&self) -> u64 {
        self.breakpoints.last().expect("nonempty").tokens
    }

    /// `F(tokens)`: fraction of requests whose total budget is at most `tokens`.
    pub fn fraction_below(&self, tokens: f64) -> f64 {
        if tokens <= 0.0 {
            return 0.0;
        }
        let (mut p0, mut t0) = (0.0, 0.0);
        for bp in &self.breakpoints {
            let t1 = bp.tokens as f64;
            if tokens < t1 {
                return p0 + (tokens - t0) / (t1 - t0) * (bp.cum_prob - p0);
            }
            p0 = bp.cum_prob;
            t0 = t1;
        }
        1.0
    }

    /// Inverse of [`fraction_below`](Self::fraction_below) on `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (mut p0, mut t0) = (0.0, 0.0);
        for bp in &self.breakpoints {
            if u <= bp.cum_prob {
                let t1 = bp.tokens as f64;
                return t0 + (u - p0) / (bp.cum_prob - p0) * (t1 - t0);
            }
            p0 = bp.cum_prob;
            t0 = bp.tokens as f64;
        }
        self.max_tokens() as f64
    }

    /// Mean total budget (exact for the piecewise-linear CDF).
    pub fn mean_tokens(&self) -> f64 {
        let (mut p0, mut t0, mut acc) = (0.0, 0.0, 0.0);
        for bp in &self.breakpoints {
            let t1 = bp.tokens as f64;
            acc += (bp.cum_prob - p0) * 0.5 * (t0 + t1);
            p0 = bp.cum_prob;
            t0 = t1;
        }
        acc
    }

    /// Draws a total token budget by inverse-CDF sampling.
    pub fn sample_total<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        (self.quantile(u).round() as u64).max(1)
    }
}

/// Mean and squared coefficient of variation of a service-time function over
/// the CDF restricted to `(lo, hi]`.
///
/// The conditional distribution is cut into about `cells` equal-probability
/// cells, and every CDF segment gets at least [`SEGMENT_CELLS`] of its own so
/// that thin, wide tail segments are resolved. `service_fn` is evaluated at
/// each cell's probability midpoint.
pub fn conditional_moments(
    cdf: &WorkloadCdf,
    lo: f64,
    hi: f64,
    cells: usize,
    mut service_fn: impl FnMut(f64) -> f64,
) -> Result<(f64, f64)> {
    let nodes = conditional_nodes(cdf, lo, hi, cells.max(MIN_CELLS))?;
    let values: Vec<(f64, f64)> = nodes.into_iter().map(|(t, w)| (service_fn(t), w)).collect();
    let total: f64 = values.iter().map(|(_, w)| w).sum();
    let mean = values.iter().map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values.iter().map(|(v, w)| (v - mean).powi(2) * w).sum::<f64>() / total;
    let scv = if mean > 0.0 { (var / (mean * mean)).max(0.0) } else { 0.0 };
    Ok((mean, scv))
}

/// `(tokens, weight)` quadrature nodes of the conditional distribution on
/// `(lo, hi]`; weights sum to one.
fn conditional_nodes(cdf: &WorkloadCdf, lo: f64, hi: f64, cells: usize) -> Result<Vec<(f64, f64)>> {
    let (_, mass) = conditional_mass(cdf, lo, hi)?;
    let mut nodes = Vec::with_capacity(cells + SEGMENT_CELLS * cdf.breakpoints.len());
    let mut t0 = 0.0_f64;
    for bp in &cdf.breakpoints {
        let t1 = bp.tokens as f64;
        let (a, b) = (t0.max(lo), t1.min(hi));
        t0 = t1;
        if b <= a {
            continue;
        }
        let m = cdf.fraction_below(b) - cdf.fraction_below(a);
        if m <= 0.0 {
            continue;
        }
        // density is flat inside a segment: equal widths are equal masses
        let k = ((cells as f64 * m / mass).ceil() as usize).max(SEGMENT_CELLS);
        let w = m / mass / k as f64;
        nodes.extend((0..k).map(|j| (a + (j as f64 + 0.5) / k as f64 * (b - a), w)));
    }
    Ok(nodes)
}

/// Token counts at the probability midpoints of `cells` equal-mass cells of
/// the conditional distribution on `(lo, hi]`.
pub fn conditional_cells(cdf: &WorkloadCdf, lo: f64, hi: f64, cells: usize) -> Result<Vec<f64>> {
    let (p_lo, mass) = conditional_mass(cdf, lo, hi)?;
    Ok((0..cells)
        .map(|j| cdf.quantile(p_lo + (j as f64 + 0.5) / cells as f64 * mass))
        .collect())
}

/// Quantile `q` of the total budget conditional on `(lo, hi]`.
pub fn conditional_quantile(cdf: &WorkloadCdf, lo: f64, hi: f64, q: f64) -> Result<f64> {
    let (p_lo, mass) = conditional_mass(cdf, lo, hi)?;
    Ok(cdf.quantile(p_lo + q.clamp(0.0, 1.0) * mass))
}

fn conditional_mass(cdf: &WorkloadCdf, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let p_lo = cdf.fraction_below(lo);
    let mass = cdf.fraction_below(hi) - p_lo;
    if !(mass > 1e-15) {
        return Err(Error::EmptyRange { lo, hi });
    }
    Ok((p_lo, mass))
}

/// Parametric length distribution, truncated at `truncation_max` tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SyntheticDist {
    Pareto {
        shape: f64,
        scale: f64,
        truncation_max: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
        truncation_max: f64,
    },
}

impl SyntheticDist {
    fn truncation_max(&self) -> f64 {
        match self {
            Self::Pareto { truncation_max, .. } | Self::Lognormal { truncation_max, .. } => {
                *truncation_max
            }
        }
    }

    fn with_dist<T>(&self, f: impl FnOnce(&dyn ContinuousCDF<f64, f64>) -> T) -> Result<T> {
        match *self {
            Self::Pareto { shape, scale, .. } => {
                let d = Pareto::new(scale, shape)
                    .map_err(|e| Error::InvalidWorkload(format!("pareto: {e}")))?;
                Ok(f(&d))
            }
            Self::Lognormal { mu, sigma, .. } => {
                let d = LogNormal::new(mu, sigma)
                    .map_err(|e| Error::InvalidWorkload(format!("lognormal: {e}")))?;
                Ok(f(&d))
            }
        }
    }

    /// Tabulates the truncated distribution on a geometric token grid.
    pub fn tabulate(&self, name: &str, points: usize) -> Result<WorkloadCdf> {
        let max = self.truncation_max();
        if !(max.is_finite() && max >= 2.0) {
            return Err(Error::InvalidWorkload(
                "truncation_max must be finite and >= 2".into(),
            ));
        }
        let lo = match *self {
            Self::Pareto { scale, .. } => scale.max(1.0),
            Self::Lognormal { .. } => 1.0,
        };
        if lo >= max {
            return Err(Error::InvalidWorkload(
                "truncation_max must exceed the distribution's lower bound".into(),
            ));
        }
        self.with_dist(|d| {
            let f_max = d.cdf(max);
            let mut pairs: Vec<(f64, u64)> = Vec::with_capacity(points);
            let ratio = (max / lo).powf(1.0 / points as f64);
            let mut x = lo;
            for _ in 0..points {
                x *= ratio;
                let t = x.round().min(max) as u64;
                let p = (d.cdf(t as f64) / f_max).min(1.0);
                if p <= 0.0 {
                    continue;
                }
                match pairs.last_mut() {
                    Some(last) if last.1 == t => last.0 = p,
                    Some(last) if last.0 >= p => {}
                    _ => pairs.push((p, t)),
                }
            }
            pairs.retain(|&(p, _)| p < 1.0);
            pairs.push((1.0, max as u64));
            pairs
        })
        .and_then(|pairs| WorkloadCdf::new(name, &pairs))
    }

    /// Exact truncated inverse-CDF draw.
    pub fn sample_total<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let max = self.truncation_max();
        let u: f64 = rng.random();
        self.with_dist(|d| {
            let x = d.inverse_cdf(u * d.cdf(max));
            (x.round().clamp(1.0, max) as u64).max(1)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Cdf(WorkloadCdf),
    Synthetic(SyntheticDist),
}

/// Input/output token split of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LengthSample {
    pub l_in: u64,
    pub l_out: u64,
}

impl LengthSample {
    pub fn total(&self) -> u64 {
        self.l_in + self.l_out
    }

    /// Splits a total budget with prompt fraction `phi`; both parts stay >= 1.
    pub fn split(total: u64, phi: f64) -> Self {
        let l_in = ((phi * total as f64).round() as u64).max(1);
        let l_out = total.saturating_sub(l_in).max(1);
        Self { l_in, l_out }
    }
}

/// Arrival rate, length source, and prompt fraction of one workload.
#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub source: WorkloadSource,
    pub arrival_rate: f64,
    pub prompt_fraction: f64,
    /// Optional model-tag mix `(tag, weight)` for multi-model fleets.
    pub model_mix: Vec<(String, f64)>,
    cdf: WorkloadCdf,
}

/// Grid resolution used when tabulating synthetic sources.
const SYNTHETIC_POINTS: usize = 2048;

impl WorkloadSpec {
    pub fn new(source: WorkloadSource, arrival_rate: f64, prompt_fraction: f64) -> Result<Self> {
        if !(arrival_rate.is_finite() && arrival_rate > 0.0) {
            return Err(Error::InvalidWorkload(format!(
                "arrival rate must be positive, got {arrival_rate}"
            )));
        }
        if !(prompt_fraction > 0.0 && prompt_fraction < 1.0) {
            return Err(Error::InvalidWorkload(format!(
                "prompt fraction must be in (0, 1), got {prompt_fraction}"
            )));
        }
        let cdf = match &source {
            WorkloadSource::Cdf(c) => c.clone(),
            WorkloadSource::Synthetic(s) => s.tabulate("synthetic", SYNTHETIC_POINTS)?,
        };
        Ok(Self {
            source,
            arrival_rate,
            prompt_fraction,
            model_mix: Vec::new(),
            cdf,
        })
    }

    pub fn from_cdf(cdf: WorkloadCdf, arrival_rate: f64, prompt_fraction: f64) -> Result<Self> {
        Self::new(WorkloadSource::Cdf(cdf), arrival_rate, prompt_fraction)
    }

    pub fn with_model_mix(mut self, mix: Vec<(String, f64)>) -> Result<Self> {
        if !mix.is_empty() && !mix.iter().any(|(_, w)| *w > 0.0) {
            return Err(Error::InvalidWorkload("model mix needs a positive weight".into()));
        }
        if mix.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWorkload("model mix weights must be >= 0".into()));
        }
        self.model_mix = mix;
        Ok(self)
    }

    pub fn with_rate(&self, arrival_rate: f64) -> Result<Self> {
        let mut w = Self::new(self.source.clone(), arrival_rate, self.prompt_fraction)?;
        w.model_mix = self.model_mix.clone();
        Ok(w)
    }

    /// Distribution used for analytics (tabulated for synthetic sources).
    pub fn cdf(&self) -> &WorkloadCdf {
        &self.cdf
    }

    pub fn max_tokens(&self) -> u64 {
        self.cdf.max_tokens()
    }

    pub fn split(&self, total: u64) -> LengthSample {
        LengthSample::split(total, self.prompt_fraction)
    }

    pub fn sample_length<R: Rng + ?Sized>(&self, rng: &mut R) -> LengthSample {
        let total = match &self.source {
            WorkloadSource::Cdf(c) => c.sample_total(rng),
            WorkloadSource::Synthetic(s) => s
                .sample_total(rng)
                .expect("synthetic parameters validated at construction"),
        };
        self.split(total)
    }

    pub fn sample_model_tag<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<String> {
        if self.model_mix.is_empty() {
            return None;
        }
        let total: f64 = self.model_mix.iter().map(|(_, w)| w).sum();
        let mut x = rng.random::<f64>() * total;
        for (tag, w) in &self.model_mix {
            if x < *w {
                return Some(tag.clone());
            }
            x -= w;
        }
        self.model_mix.last().map(|(t, _)| t.clone())
    }
}

/// The CDFs shipped with the crate.
pub mod builtin {
    use super::WorkloadCdf;

    const LMSYS: &str = include_str!("../data/cdf/lmsys.json");
    const AZURE: &str = include_str!("../data/cdf/azure.json");
    const AGENT: &str = include_str!("../data/cdf/agent.json");

    pub const NAMES: [&str; 3] = ["lmsys", "azure", "agent"];

    pub fn lmsys() -> WorkloadCdf {
        WorkloadCdf::from_json_named(LMSYS, "lmsys").expect("bundled CDF is valid")
    }

    pub fn azure() -> WorkloadCdf {
        WorkloadCdf::from_json_named(AZURE, "azure").expect("bundled CDF is valid")
    }

    pub fn agent() -> WorkloadCdf {
        WorkloadCdf::from_json_named(AGENT, "agent").expect("bundled CDF is valid")
    }

    pub fn by_name(name: &str) -> Option<WorkloadCdf> {
        match name {
            "lmsys" => Some(lmsys()),
            "azure" => Some(azure()),
            "agent" => Some(agent()),
            _ => None,
        }
    }

    /// Prompt fraction convention for each bundled workload.
    pub fn default_prompt_fraction(name: &str) -> Option<f64> {
        match name {
            "lmsys" => Some(0.5),
            "azure" => Some(0.7),
            "agent" => Some(0.9),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loads_anchor_document() {
        let cdf = WorkloadCdf::from_json(r#"{"0.5": 512, "0.984": 4096, "1.0": 65536}"#).unwrap();
        assert_eq!(cdf.breakpoints().len(), 3);
        assert_abs_diff_eq!(cdf.fraction_below(4096.0), 0.984, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cdf() {
        let cdf = WorkloadCdf::from_json("[[1.0, 8192]]").unwrap();
        assert_eq!(cdf.fraction_below(8192.0), 1.0);
        assert_eq!(cdf.max_tokens(), 8192);
    }

    #[test]
    fn out_of_order_pairs_sort_but_conflicts_fail() {
        let cdf = WorkloadCdf::from_json("[[0.9, 100], [0.5, 50], [1.0, 200]]").unwrap();
        assert_eq!(cdf.breakpoints()[0].tokens, 50);
        let err = WorkloadCdf::from_json("[[0.9, 50], [0.5, 100], [1.0, 200]]").unwrap_err();
        assert!(matches!(err, Error::InvalidCdf(_)));
    }

    #[test]
    fn rejects_bad_documents() {
        for doc in [
            "not json",
            "[[0.5, 100], [0.9, 200]]",
            "[[0.0, 100], [1.0, 200]]",
            "[[0.5, 0], [1.0, 200]]",
            "[[0.5, 10.5], [1.0, 200]]",
            "[[0.5, 100], [0.5, 150], [1.0, 200]]",
            "[]",
        ] {
            assert!(WorkloadCdf::from_json(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn named_object_form() {
        let cdf =
            WorkloadCdf::from_json(r#"{"name": "x", "breakpoints": [[0.5, 10], [1.0, 20]]}"#)
                .unwrap();
        assert_eq!(cdf.name, "x");
        let back = WorkloadCdf::from_json(&cdf.to_json()).unwrap();
        assert_eq!(back, cdf);
    }

    #[test]
    fn interpolation_from_origin() {
        let cdf = WorkloadCdf::new("p", &[(1.0, 100)]).unwrap();
        assert_abs_diff_eq!(cdf.fraction_below(50.0), 0.5, epsilon = 1e-12);
        assert_eq!(cdf.fraction_below(0.0), 0.0);
        assert_eq!(cdf.fraction_below(1e9), 1.0);
        assert_abs_diff_eq!(cdf.quantile(0.25), 25.0, epsilon = 1e-12);
    }

    #[test]
    fn point_mass_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = WorkloadSpec::from_cdf(WorkloadCdf::new("d", &[(1.0, 1000)]).unwrap(), 1.0, 0.5)
            .unwrap();
        // the origin interpolation spreads mass over (0, 1000]; only the split rule is checked
        let s = LengthSample::split(1000, 0.5);
        assert_eq!((s.l_in, s.l_out), (500, 500));
        let s = LengthSample::split(3, 0.5);
        assert_eq!((s.l_in, s.l_out), (2, 1));
        let s = LengthSample::split(1, 0.3);
        assert!(s.l_in >= 1 && s.l_out >= 1);
        for _ in 0..100 {
            let s = w.sample_length(&mut rng);
            assert!(s.l_in >= 1 && s.l_out >= 1);
        }
    }

    #[test]
    fn constant_service_has_zero_scv() {
        let cdf = builtin::lmsys();
        let (m, scv) = conditional_moments(&cdf, 0.0, 1e9, 256, |_| 0.25).unwrap();
        assert_abs_diff_eq!(m, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(scv, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_service_moments() {
        let cdf = WorkloadCdf::new("two", &[(0.5, 100), (1.0, 200)]).unwrap();
        let (m, scv) =
            conditional_moments(&cdf, 0.0, 200.0, 256, |t| if t <= 100.0 { 1.0 } else { 3.0 })
                .unwrap();
        assert_abs_diff_eq!(m, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scv, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn empty_range_is_an_error() {
        let cdf = WorkloadCdf::new("d", &[(1.0, 100)]).unwrap();
        assert!(matches!(
            conditional_moments(&cdf, 100.0, 500.0, 256, |t| t),
            Err(Error::EmptyRange { .. })
        ));
    }

    #[test]
    fn synthetic_tabulation_tracks_the_distribution() {
        let d = SyntheticDist::Pareto {
            shape: 1.5,
            scale: 100.0,
            truncation_max: 100_000.0,
        };
        let cdf = d.tabulate("p", 2048).unwrap();
        let exact = |x: f64| (1.0 - (100.0 / x).powf(1.5)) / (1.0 - (0.001f64).powf(1.5));
        for x in [200.0, 1000.0, 10_000.0] {
            assert!((cdf.fraction_below(x) - exact(x)).abs() < 2e-3, "{x}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = d.sample_total(&mut rng).unwrap();
            assert!((100..=100_000).contains(&t));
        }
        let ln = SyntheticDist::Lognormal {
            mu: 6.0,
            sigma: 1.0,
            truncation_max: 50_000.0,
        };
        let cdf = ln.tabulate("ln", 2048).unwrap();
        assert!((cdf.fraction_below(6.0f64.exp()) - 0.5).abs() < 5e-3);
    }

    #[test]
    fn bundled_cdfs_hit_their_anchors() {
        assert_abs_diff_eq!(builtin::lmsys().fraction_below(4096.0), 0.984, epsilon = 1e-9);
        assert_eq!(builtin::lmsys().max_tokens(), 65_536);
        assert_abs_diff_eq!(builtin::azure().fraction_below(2048.0), 0.78, epsilon = 1e-9);
        assert_eq!(builtin::azure().max_tokens(), 8192);
        assert_abs_diff_eq!(builtin::agent().fraction_below(4096.0), 0.54, epsilon = 1e-9);
        assert_eq!(builtin::agent().max_tokens(), 300_000);
    }

    fn ks_statistic(cdf: &WorkloadCdf, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<u64> = (0..n).map(|_| cdf.sample_total(&mut rng)).collect();
        xs.sort_unstable();
        // draws are rounded to whole tokens, so compare at the half-token edges
        let mut d = 0.0_f64;
        let mut i = 0;
        while i < xs.len() {
            let x = xs[i];
            let below = i as f64 / n as f64;
            while i < xs.len() && xs[i] == x {
                i += 1;
            }
            let at = i as f64 / n as f64;
            let lo_edge = if x <= 1 { 0.0 } else { cdf.fraction_below(x as f64 - 0.5) };
            d = d.max((below - lo_edge).abs()).max((at - cdf.fraction_below(x as f64 + 0.5)).abs());
        }
        d
    }

    #[test]
    fn inverse_cdf_sampling_passes_ks() {
        for cdf in [builtin::lmsys(), builtin::azure(), builtin::agent()] {
            let d = ks_statistic(&cdf, 100_000, 11);
            assert!(d < 0.01, "{}: KS {d}", cdf.name);
        }
    }

    /// `E[g(T)]` and `Var[g(T)]` by summing over a fine token grid under the
    /// piecewise-uniform density.
    fn brute_moments(cdf: &WorkloadCdf, g: impl Fn(f64) -> f64) -> (f64, f64) {
        let (mut p0, mut t0) = (0.0, 0.0);
        let (mut m1, mut m2) = (0.0, 0.0);
        for bp in cdf.breakpoints() {
            let t1 = bp.tokens as f64;
            let steps = ((t1 - t0).ceil() as usize * 4).max(64);
            let dp = (bp.cum_prob - p0) / steps as f64;
            for k in 0..steps {
                let t = t0 + (k as f64 + 0.5) / steps as f64 * (t1 - t0);
                let v = g(t);
                m1 += v * dp;
                m2 += v * v * dp;
            }
            p0 = bp.cum_prob;
            t0 = t1;
        }
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn full_range_moments_match_brute_force() {
        let a100 = crate::gpu::a100();
        for (cdf, phi) in [(builtin::lmsys(), 0.5), (builtin::azure(), 0.7), (builtin::agent(), 0.9)] {
            let w = WorkloadSpec::from_cdf(cdf.clone(), 1.0, phi).unwrap();
            let g = |t: f64| {
                let s = w.split((t.round() as u64).max(1));
                a100.service_time_at(s.l_in, s.l_out, 16)
            };
            let (mean, scv) = conditional_moments(&cdf, 0.0, cdf.max_tokens() as f64, DEFAULT_CELLS, g).unwrap();
            let (m1, var) = brute_moments(&cdf, g);
            assert!(((mean - m1) / m1).abs() < 1e-3, "{}: mean {mean} vs {m1}", cdf.name);
            let scv_ref = var / (m1 * m1);
            assert!(((scv - scv_ref) / scv_ref).abs() < 1e-2, "{}: scv {scv} vs {scv_ref}", cdf.name);
        }
    }

    proptest! {
        #[test]
        fn fraction_below_is_a_cdf(a in 0.0f64..400_000.0, b in 0.0f64..400_000.0) {
            for cdf in [builtin::lmsys(), builtin::azure(), builtin::agent()] {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (flo, fhi) = (cdf.fraction_below(lo), cdf.fraction_below(hi));
                prop_assert!((0.0..=1.0).contains(&flo) && (0.0..=1.0).contains(&fhi));
                prop_assert!(flo <= fhi);
            }
        }

        #[test]
        fn scv_nonnegative_and_zero_only_when_constant(
            lo in 0.0f64..60_000.0,
            width in 100.0f64..70_000.0,
            slope in 0.0f64..1.0,
        ) {
            let cdf = builtin::lmsys();
            let hi = lo + width;
            prop_assume!(cdf.fraction_below(hi) - cdf.fraction_below(lo) > 1e-6);
            let (_, scv) = conditional_moments(&cdf, lo, hi, 256, |t| 1.0 + slope * t).unwrap();
            prop_assert!(scv >= 0.0);
            if slope == 0.0 {
                prop_assert!(scv < 1e-24);
            } else if slope > 1e-6 {
                prop_assert!(scv > 0.0);
            }
        }
    }
}
