//! Scenario files: one TOML (or JSON) document per planning question.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::des::{FleetConfig, PoolConfig};
use crate::disagg::{DisaggParams, BETA_TTFT, DEFAULT_DECODE_BATCH, DEFAULT_PREFILL_BATCH};
use crate::error::{Error, Result};
use crate::gpu::{GpuProfile, ProfileCatalog, ProfileOverride};
use crate::gridflex::{FlexParams, DEFAULT_WINDOW_S};
use crate::optimizer::{DesParams, SizingMode, SweepSpace, DEFAULT_MAX_GPUS_PER_POOL, DEFAULT_RHO_CAP, DEFAULT_TOP_K, DEFAULT_VERIFY_REQUESTS};
use crate::reliability::NodeAvail;
use crate::routing::RouterConfig;
use crate::workload::{builtin, SyntheticDist, WorkloadCdf, WorkloadSource, WorkloadSpec, DEFAULT_CELLS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!("unknown format {other:?}, expected csv or table"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    /// Bundled CDF name or a JSON file path relative to the scenario.
    pub cdf: Option<String>,
    pub synthetic: Option<SyntheticDist>,
    pub arrival_rate: f64,
    pub prompt_fraction: Option<f64>,
    #[serde(default)]
    pub model_mix: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloSection {
    pub p99_ttft_ms: f64,
    pub tpot_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub b_short: Vec<u64>,
    pub gpus: Vec<String>,
    #[serde(default)]
    pub mixed: bool,
    pub rho_cap: Option<f64>,
    pub max_gpus_per_pool: Option<u32>,
    pub long_context: Option<u64>,
    pub top_k: Option<usize>,
    pub sizing: Option<SizingMode>,
    pub router: Option<RouterConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    pub gpu: String,
    pub count: u32,
    pub context: u64,
    pub batch_cap: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSection {
    pub label: Option<String>,
    #[serde(default)]
    pub router: RouterConfig,
    pub pools: Vec<PoolSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfSection {
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisaggSection {
    pub gpus: Vec<String>,
    pub prefill_batch: Option<u32>,
    pub decode_batch: Option<u32>,
    pub beta_ttft: Option<f64>,
    pub rho_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridflexSection {
    pub flex: Option<Vec<f64>>,
    pub baseline_batch: Option<u32>,
    pub window_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub requests: Option<usize>,
    pub format: Option<ReportFormat>,
    pub node_avail: Option<NodeAvail>,
    pub workload: WorkloadSection,
    pub slo: SloSection,
    /// Extra GPU profiles, each fully specified.
    #[serde(default)]
    pub profiles: Vec<GpuProfile>,
    /// Field overrides keyed by profile name.
    #[serde(default)]
    pub overrides: BTreeMap<String, ProfileOverride>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub fleet: Vec<FleetSection>,
    pub whatif: Option<WhatIfSection>,
    pub disagg: Option<DisaggSection>,
    pub gridflex: Option<GridflexSection>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Scenario {
    /// Reads a scenario; `.json` files are parsed as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut s = if is_json { Self::from_json(&text)? } else { Self::from_toml(&text)? };
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    pub fn slo_s(&self) -> f64 {
        self.slo.p99_ttft_ms / 1000.0
    }

    pub fn requests(&self) -> usize {
        self.requests.unwrap_or(DEFAULT_VERIFY_REQUESTS)
    }

    pub fn catalog(&self) -> Result<ProfileCatalog> {
        let mut cat = ProfileCatalog::builtin();
        for p in &self.profiles {
            cat.insert(p.clone())?;
        }
        for (name, ov) in &self.overrides {
            cat.override_profile(name, ov)?;
        }
        Ok(cat)
    }

    fn gpus(&self, names: &[String]) -> Result<Vec<GpuProfile>> {
        let cat = self.catalog()?;
        names.iter().map(|n| cat.get(n).cloned()).collect()
    }

    pub fn workload(&self) -> Result<WorkloadSpec> {
        let w = &self.workload;
        let (source, default_phi) = match (&w.cdf, &w.synthetic) {
            (Some(name), None) => {
                let cdf = match builtin::by_name(name) {
                    Some(c) => c,
                    None => {
                        let path = self.base_dir.join(name);
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| Error::Config(format!("cannot read CDF {}: {e}", path.display())))?;
                        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cdf");
                        WorkloadCdf::from_json_named(&text, stem)?
                    }
                };
                (WorkloadSource::Cdf(cdf), builtin::default_prompt_fraction(name))
            }
            (None, Some(s)) => (WorkloadSource::Synthetic(s.clone()), None),
            _ => {
                return Err(Error::Config(
                    "workload needs exactly one of `cdf` or `synthetic`".into(),
                ))
            }
        };
        let phi = w.prompt_fraction.or(default_phi).unwrap_or(0.5);
        WorkloadSpec::new(source, w.arrival_rate, phi)?.with_model_mix(w.model_mix.clone())
    }

    pub fn sweep_space(&self) -> Result<SweepSpace> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no [sweep] section".into()))?;
        let mut space = SweepSpace::new(s.b_short.clone(), self.gpus(&s.gpus)?, self.slo_s()).mixed(s.mixed);
        space.rho_cap = s.rho_cap.unwrap_or(DEFAULT_RHO_CAP);
        space.max_gpus_per_pool = s.max_gpus_per_pool.unwrap_or(DEFAULT_MAX_GPUS_PER_POOL);
        space.long_context_bound = s.long_context;
        space.sizing = s.sizing.unwrap_or_default();
        space.cells = DEFAULT_CELLS;
        space.validate()?;
        Ok(space)
    }

    pub fn des_params(&self) -> Result<DesParams> {
        let s = self.sweep.as_ref();
        Ok(DesParams {
            k: s.and_then(|s| s.top_k).unwrap_or(DEFAULT_TOP_K),
            n_requests: self.requests(),
            seed: self.seed,
            router: s.and_then(|s| s.router.clone()).unwrap_or_default(),
            node_avail: self.node_avail.as_ref().map(NodeAvail::resolve).transpose()?,
        })
    }

    /// Explicit fleets with their labels.
    pub fn fleets(&self) -> Result<Vec<(String, FleetConfig)>> {
        if self.fleet.is_empty() {
            return Err(Error::Config("scenario has no [[fleet]] section".into()));
        }
        let cat = self.catalog()?;
        self.fleet
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let pools = f
                    .pools
                    .iter()
                    .map(|p| {
                        let pool = PoolConfig::new(cat.get(&p.gpu)?.clone(), p.count, p.context);
                        Ok(match p.batch_cap {
                            Some(c) => pool.with_batch_cap(c),
                            None => pool,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let fleet = FleetConfig::new(pools, f.router.clone());
                fleet.validate()?;
                let label = f.label.clone().unwrap_or_else(|| format!("fleet{}", i + 1));
                Ok((label, fleet))
            })
            .collect()
    }

    pub fn lambda_grid(&self) -> Result<Vec<f64>> {
        self.whatif
            .as_ref()
            .map(|w| w.lambdas.clone())
            .ok_or_else(|| Error::Config("scenario has no [whatif] section".into()))
    }

    pub fn disagg_setup(&self) -> Result<(Vec<GpuProfile>, DisaggParams, f64)> {
        let d = self
            .disagg
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no [disagg] section".into()))?;
        let tpot = self
            .slo
            .tpot_ms
            .ok_or_else(|| Error::Config("disagg needs slo.tpot_ms".into()))?;
        let params = DisaggParams {
            prefill_batch: d.prefill_batch.unwrap_or(DEFAULT_PREFILL_BATCH),
            decode_batch: d.decode_batch.unwrap_or(DEFAULT_DECODE_BATCH),
            beta_ttft: d.beta_ttft.unwrap_or(BETA_TTFT),
            rho_cap: d.rho_cap.unwrap_or(DEFAULT_RHO_CAP),
            ..DisaggParams::default()
        };
        params.validate()?;
        Ok((self.gpus(&d.gpus)?, params, tpot / 1000.0))
    }

    /// The single homogeneous pool and sweep parameters for demand response.
    pub fn gridflex_setup(&self) -> Result<(PoolConfig, FlexParams)> {
        let g = self
            .gridflex
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no [gridflex] section".into()))?;
        let fleets = self.fleets()?;
        let pool = match fleets.first().map(|(_, f)| f.pools.as_slice()) {
            Some([p]) => p.clone(),
            _ => return Err(Error::Config("gridflex needs one fleet with a single pool".into())),
        };
        let mut params = FlexParams::standard(self.slo_s(), self.seed);
        if let Some(f) = &g.flex {
            params.flex_grid = f.clone();
        }
        params.baseline_batch = g.baseline_batch.unwrap_or(params.baseline_batch);
        params.window_s = g.window_s.unwrap_or(DEFAULT_WINDOW_S);
        Ok((pool, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 7
        [workload]
        cdf = "lmsys"
        arrival_rate = 100.0
        [slo]
        p99_ttft_ms = 500
        [sweep]
        b_short = [4096, 8192]
        gpus = ["A100"]
        router = { kind = "compress", gamma = 1.5 }
    "#;

    #[test]
    fn toml_and_json_agree() {
        let t = Scenario::from_toml(MINIMAL).unwrap();
        let j = Scenario::from_json(
            r#"{"seed": 7, "workload": {"cdf": "lmsys", "arrival_rate": 100.0},
                "slo": {"p99_ttft_ms": 500},
                "sweep": {"b_short": [4096, 8192], "gpus": ["A100"],
                          "router": {"kind": "compress", "gamma": 1.5}}}"#,
        )
        .unwrap();
        assert_eq!(t, j);
        assert_eq!(t.workload().unwrap().prompt_fraction, 0.5);
        assert_eq!(t.sweep_space().unwrap().slo_p99_ttft, 0.5);
        let d = t.des_params().unwrap();
        assert_eq!(d.router, RouterConfig::Compress { b_short: None, gamma: 1.5 });
        assert_eq!(d.n_requests, DEFAULT_VERIFY_REQUESTS);
    }

    #[test]
    fn missing_sections_are_config_errors() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert!(matches!(s.fleets(), Err(Error::Config(_))));
        assert!(matches!(s.lambda_grid(), Err(Error::Config(_))));
        assert!(matches!(s.disagg_setup(), Err(Error::Config(_))));
        assert!(Scenario::from_toml("[workload]\ncdf = \"lmsys\"").is_err());
        assert!(Scenario::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
    }

    #[test]
    fn overrides_and_custom_profiles() {
        let s = Scenario::from_toml(&format!(
            "{MINIMAL}\n[overrides.A100]\nannual_cost_usd = 1.0\n\
             [[profiles]]\nname = \"X1\"\nw_ms = 1.0\nh_ms_per_slot = 0.1\nkv_block_budget = 64\n\
             block_tokens = 16\nchunk_tokens = 512\nvram_gb = 8.0\nannual_cost_usd = 100.0\n"
        ))
        .unwrap();
        let cat = s.catalog().unwrap();
        assert_eq!(cat.get("A100").unwrap().annual_cost_usd, 1.0);
        assert_eq!(cat.get("X1").unwrap().kv_block_budget, 64);
    }

    #[test]
    fn unknown_gpu_is_rejected() {
        let s = Scenario::from_toml(&MINIMAL.replace("\"A100\"", "\"B200\"")).unwrap();
        assert!(matches!(s.sweep_space(), Err(Error::UnknownProfile(_))));
    }
}
