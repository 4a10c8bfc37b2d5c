//! Command implementations behind the `fleetsim` binary.

use std::path::{Path, PathBuf};

use crate::des::{run_sim, FleetSimResult, PoolStats, SimParams};
use crate::disagg::{cheapest_feasible, size_disagg};
use crate::error::{Error, Result};
use crate::gpu::{GpuProfile, ProfileCatalog};
use crate::gridflex::flex_curve;
use crate::optimizer::{homogeneous_point, optimize, whatif_lambda_sweep, ParetoPoint};
use crate::report::{kusd, mark, ms, pct, Report, Table};
use crate::scenario::{ReportFormat, Scenario};

pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Optimize,
    Simulate,
    Whatif,
    Disagg,
    Gridflex,
    Profiles,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Optimize => "optimize",
            Self::Simulate => "simulate",
            Self::Whatif => "whatif",
            Self::Disagg => "disagg",
            Self::Gridflex => "gridflex",
            Self::Profiles => "profiles",
        }
    }
}

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub requests: Option<usize>,
    pub format: Option<ReportFormat>,
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub feasible: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.feasible {
            EXIT_FEASIBLE
        } else {
            EXIT_INFEASIBLE
        }
    }
}

/// Exit status for a failed command: bad input is a usage error, anything
/// the model rejects is a feasibility failure.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Unstable { .. }
        | Error::NotViable(_)
        | Error::InvalidFleet(_)
        | Error::Unroutable { .. }
        | Error::ContextTooLarge { .. } => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Loads the scenario, applies overrides, and runs `command`.
pub fn run_file(command: Command, scenario: Option<&Path>, opts: &RunOptions) -> Result<(Outcome, ReportFormat)> {
    let scenario = match scenario {
        Some(p) => Some(Scenario::load(p)?),
        None if command == Command::Profiles => None,
        None => return Err(Error::Config(format!("{} needs --scenario", command.name()))),
    };
    let format = opts
        .format
        .or(scenario.as_ref().and_then(|s| s.format))
        .unwrap_or_default();
    let outcome = match scenario {
        Some(s) => run(command, &apply(s, opts), opts)?,
        None => cmd_profiles(&ProfileCatalog::builtin()),
    };
    Ok((outcome, format))
}

fn apply(mut s: Scenario, opts: &RunOptions) -> Scenario {
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    if let Some(n) = opts.requests {
        s.requests = Some(n);
    }
    s
}

pub fn run(command: Command, scenario: &Scenario, opts: &RunOptions) -> Result<Outcome> {
    if opts.trace.is_some() && command != Command::Simulate {
        return Err(Error::Config("--trace applies only to simulate".into()));
    }
    match command {
        Command::Optimize => cmd_optimize(scenario),
        Command::Simulate => cmd_simulate(scenario, opts.trace.as_deref()),
        Command::Whatif => cmd_whatif(scenario),
        Command::Disagg => cmd_disagg(scenario),
        Command::Gridflex => cmd_gridflex(scenario),
        Command::Profiles => Ok(cmd_profiles(&scenario.catalog()?)),
    }
}

fn header(title: &str, s: &Scenario) -> Result<Report> {
    let w = s.workload()?;
    let mut r = Report::new(format!("{title}: {}", s.name()));
    r.note(format!(
        "workload {} lambda={} phi={} slo_p99_ttft_ms={} seed={}",
        w.cdf().name,
        w.arrival_rate,
        w.prompt_fraction,
        s.slo.p99_ttft_ms,
        s.seed
    ));
    Ok(r)
}

fn gpu_pair(p: &ParetoPoint) -> String {
    if p.is_homogeneous() {
        p.gpu_s.clone()
    } else {
        format!("{}/{}", p.gpu_s, p.gpu_l)
    }
}

fn des_cell(p: &ParetoPoint) -> String {
    p.des.as_ref().map_or("-".into(), |d| ms(d.p99_ttft))
}

fn plan_row(label: String, p: &ParetoPoint) -> Vec<String> {
    vec![
        label,
        format!("{:.3}", p.alpha_s),
        gpu_pair(p),
        p.n_s.to_string(),
        p.n_l.to_string(),
        p.total_gpus.to_string(),
        kusd(p.annual_cost_usd),
        pct(p.saving_vs_baseline),
        ms(p.short.p99_ttft),
        p.long.as_ref().map_or("-".into(), |l| ms(l.p99_ttft)),
        des_cell(p),
        mark(p.slo_pass()),
        p.cause().unwrap_or_default(),
    ]
}

const PLAN_HEADERS: [&str; 13] = [
    "B_short", "alpha_s", "gpus", "n_s", "n_l", "total", "cost_k_yr", "saving_pct", "p99_short_ms",
    "p99_long_ms", "des_p99_ms", "slo", "cause",
];

/// Sweep curve (best candidate per threshold), frontier, and the chosen plan.
pub fn cmd_optimize(s: &Scenario) -> Result<Outcome> {
    if s.sweep.is_none() && !s.fleet.is_empty() {
        return Err(Error::Config("scenario defines a fleet, not a sweep space; use simulate".into()));
    }
    let workload = s.workload()?;
    let space = s.sweep_space()?;
    let params = s.des_params()?;
    let res = optimize(&workload, &space, &params)?;
    let mut r = header("optimize", s)?;

    let mut curve = Table::new("cost by split threshold", &PLAN_HEADERS);
    if let Some(b) = &res.homogeneous_baseline {
        let verified = res
            .candidates
            .iter()
            .find(|p| p.is_homogeneous() && p.b_short == b.b_short && p.gpu_s == b.gpu_s)
            .unwrap_or(b);
        curve.push(plan_row(format!("homog@{}", b.b_short), verified));
    }
    for &b in &space.b_short_grid {
        if let Some(p) = res.candidates.iter().find(|p| p.b_short == b) {
            curve.push(plan_row(b.to_string(), p));
        }
    }
    r.tables.push(curve);

    let mut frontier = Table::new("pareto frontier", &PLAN_HEADERS);
    for p in &res.frontier {
        frontier.push(plan_row(p.b_short.to_string(), p));
    }
    r.tables.push(frontier);

    match &res.best {
        Some(b) => {
            r.note(format!(
                "best: B_short={} {} {}+{} GPUs ${}K/yr saving {}% des_p99_ms={}",
                b.b_short,
                gpu_pair(b),
                b.n_s,
                b.n_l,
                kusd(b.annual_cost_usd),
                pct(b.saving_vs_baseline),
                des_cell(b)
            ));
            if let Some(prod) = &b.production {
                r.note(format!(
                    "production at A={}: {}+{} GPUs ${}K/yr",
                    prod.availability,
                    prod.n_s,
                    prod.n_l,
                    kusd(prod.annual_cost_usd)
                ));
            }
        }
        None => r.note("no verified plan meets the SLO"),
    }
    Ok(Outcome {
        report: r,
        feasible: res.best.is_some(),
    })
}

fn stats_row(label: &str, gpu: &str, p: &PoolStats) -> Vec<String> {
    let lat = |f: fn(&crate::des::LatencySummary) -> f64, s: &Option<crate::des::LatencySummary>| {
        s.as_ref().map_or("-".into(), |x| ms(f(x)))
    };
    vec![
        label.into(),
        gpu.into(),
        p.gpu_count.to_string(),
        p.slots.to_string(),
        p.routed.to_string(),
        p.measured.to_string(),
        format!("{:.3}", p.utilization),
        lat(|x| x.p99, &p.queue_wait),
        lat(|x| x.p50, &p.ttft),
        lat(|x| x.p90, &p.ttft),
        lat(|x| x.p99, &p.ttft),
        lat(|x| x.p99, &p.e2e),
        p.slo_attainment.map_or("-".into(), pct),
    ]
}

/// Per-pool percentiles for every fleet in the scenario.
pub fn cmd_simulate(s: &Scenario, trace: Option<&Path>) -> Result<Outcome> {
    let workload = s.workload()?;
    let slo = s.slo_s();
    let fleets = s.fleets()?;
    let mut r = header("simulate", s)?;
    let mut any_pass = false;
    let mut traces = Vec::new();
    for (label, fleet) in &fleets {
        let mut params = SimParams::new(s.requests(), s.seed).with_slo(slo);
        if trace.is_some() {
            params = params.with_trace();
        }
        let res = run_sim(fleet, &workload, &params)?;
        let mut t = Table::new(
            format!("{label} (router {})", fleet.router.label()),
            &[
                "pool", "gpu", "gpus", "slots", "routed", "measured", "util", "wait_p99_ms", "ttft_p50_ms",
                "ttft_p90_ms", "ttft_p99_ms", "e2e_p99_ms", "slo_attain_pct",
            ],
        );
        for (pool, cfg) in res.pools.iter().zip(&fleet.pools) {
            t.push(stats_row(&pool.label, &cfg.gpu.name, pool));
        }
        t.push(stats_row("fleet", "-", &res.fleet));
        r.tables.push(t);
        let pass = res.rejected == 0 && res.meets_slo(slo);
        any_pass |= pass;
        r.note(format!(
            "{label}: p99_ttft_ms={} rejected={} gpus={} cost_k_yr={} slo={}",
            ms(res.p99_ttft()),
            res.rejected,
            fleet.total_gpus(),
            kusd(fleet.annual_cost()),
            mark(pass)
        ));
        traces.push((label.clone(), res));
    }
    if let Some(path) = trace {
        write_traces(path, &traces)?;
    }
    Ok(Outcome {
        report: r,
        feasible: any_pass,
    })
}

fn write_traces(path: &Path, runs: &[(String, FleetSimResult)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fleet", "id", "arrival_s", "pool", "queue_wait_s", "ttft_s", "e2e_s", "l_in", "l_out"])?;
    for (label, res) in runs {
        for t in &res.trace {
            w.write_record([
                label.clone(),
                t.id.to_string(),
                t.arrival_s.to_string(),
                t.pool.to_string(),
                t.queue_wait_s.to_string(),
                t.ttft_s.to_string(),
                t.e2e_s.to_string(),
                t.l_in.to_string(),
                t.l_out.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Minimal verified fleet per arrival rate.
pub fn cmd_whatif(s: &Scenario) -> Result<Outcome> {
    let workload = s.workload()?;
    let space = s.sweep_space()?;
    let params = s.des_params()?;
    let grid = s.lambda_grid()?;
    let rows = whatif_lambda_sweep(&workload, &space, &grid, &params)?;
    let mut r = header("whatif", s)?;
    let mut t = Table::new(
        "GPU steps by arrival rate",
        &["lambda", "B_short", "gpus", "n_s", "n_l", "total", "cost_k_yr", "des_p99_ms", "headroom_lambda"],
    );
    for row in &rows {
        match &row.best {
            Some(p) => t.push(vec![
                format!("{}", row.lambda),
                p.b_short.to_string(),
                gpu_pair(p),
                p.n_s.to_string(),
                p.n_l.to_string(),
                p.total_gpus.to_string(),
                kusd(p.annual_cost_usd),
                des_cell(p),
                row.headroom_lambda.map_or("-".into(), |h| format!("{h:.1}")),
            ]),
            None => {
                let mut cells = vec![format!("{}", row.lambda)];
                cells.extend(std::iter::repeat_n("-".to_string(), 7));
                cells.push("infeasible".into());
                t.push(cells);
            }
        }
    }
    r.tables.push(t);
    let all = rows.iter().all(|w| w.best.is_some());
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        if let (Some(a), Some(b)) = (first.total_gpus(), last.total_gpus()) {
            r.note(format!(
                "traffic x{:.2} -> GPUs x{:.2}",
                last.lambda / first.lambda,
                b as f64 / a as f64
            ));
        }
    }
    Ok(Outcome {
        report: r,
        feasible: all,
    })
}

/// Aggregated baselines next to every prefill/decode pairing.
pub fn cmd_disagg(s: &Scenario) -> Result<Outcome> {
    let workload = s.workload()?;
    let (gpus, params, tpot_slo) = s.disagg_setup()?;
    let ttft_slo = s.slo_s();
    let rows = size_disagg(&workload, &gpus, ttft_slo, tpot_slo, &params)?;
    let mut r = header("disagg", s)?;
    r.note(format!(
        "tpot_slo_ms={} prefill_batch={} decode_batch={} beta_ttft={}",
        tpot_slo * 1000.0,
        params.prefill_batch,
        params.decode_batch,
        params.beta_ttft
    ));
    let mut t = Table::new("aggregated vs disaggregated", &["config", "gpus", "cost_k_yr", "ttft_p99_ms", "tpot_ms", "feasible"]);
    let mut space = crate::optimizer::SweepSpace::new(vec![1], gpus.clone(), ttft_slo);
    space.rho_cap = params.rho_cap;
    for g in &gpus {
        if let Some(p) = homogeneous_point(&workload, &space, g)? {
            t.push(vec![
                format!("All-{} aggregated", g.name),
                p.total_gpus.to_string(),
                kusd(p.annual_cost_usd),
                ms(p.short.p99_ttft),
                "-".into(),
                if p.analytical_slo_pass { "yes".into() } else { format!("no ({})", p.cause().unwrap_or_default()) },
            ]);
        }
    }
    for d in &rows {
        t.push(vec![
            d.config.label(),
            d.config.gpus_label(),
            kusd(d.annual_cost_usd),
            ms(d.ttft_p99),
            ms(d.tpot),
            match d.cause {
                None => "yes".into(),
                Some(c) => format!("no ({})", c.label()),
            },
        ]);
    }
    r.tables.push(t);
    let feasible = match cheapest_feasible(&rows) {
        Ok(best) => {
            r.note(format!(
                "cheapest: {} {} ${}K/yr",
                best.config.label(),
                best.config.gpus_label(),
                kusd(best.annual_cost_usd)
            ));
            true
        }
        Err(e) => {
            r.note(e.to_string());
            false
        }
    };
    Ok(Outcome { report: r, feasible })
}

/// Batch cap, power, and latency verdicts across power-reduction targets.
pub fn cmd_gridflex(s: &Scenario) -> Result<Outcome> {
    let workload = s.workload()?;
    let (pool, params) = s.gridflex_setup()?;
    let points = flex_curve(&pool, &workload, &params)?;
    let mut r = header("gridflex", s)?;
    r.note(format!(
        "{}x {} baseline_batch={} window_s={}",
        pool.gpu_count, pool.gpu.name, params.baseline_batch, params.window_s
    ));
    let mut t = Table::new(
        "demand-response flex curve",
        &["flex_pct", "n_max", "w_per_gpu", "fleet_kw", "rho", "p99_analytical_ms", "p99_des_ms", "slo", "short_event"],
    );
    for p in &points {
        t.push(vec![
            format!("{:.0}", p.flex_fraction * 100.0),
            format!("{}{}", p.batch_cap, if p.over_target { "*" } else { "" }),
            format!("{:.0}", p.watts_per_gpu),
            format!("{:.1}", p.fleet_kw),
            format!("{:.3}", p.rho),
            ms(p.p99_analytical),
            ms(p.p99_des),
            mark(p.slo_pass),
            mark(p.short_event_pass),
        ]);
    }
    r.tables.push(t);
    if points.iter().any(|p| p.over_target) {
        r.note("* even a batch of one draws more than the power target");
    }
    let feasible = points.iter().any(|p| p.slo_pass || p.short_event_pass);
    Ok(Outcome { report: r, feasible })
}

pub fn profile_table(profiles: &[&GpuProfile]) -> Table {
    let mut t = Table::new(
        "GPU profiles",
        &["gpu", "w_ms", "h_ms", "kv_blocks", "chunk", "n_max_8k", "vram_gb", "cost_k_yr", "usd_hr", "power"],
    );
    for p in profiles {
        t.push(vec![
            p.name.clone(),
            format!("{}", p.w_ms),
            format!("{}", p.h_ms_per_slot),
            p.kv_block_budget.to_string(),
            p.chunk_tokens.to_string(),
            p.n_max(8192).map_or("-".into(), |n| n.to_string()),
            format!("{}", p.vram_gb),
            kusd(p.annual_cost_usd),
            p.hourly_cost_usd.map_or("-".into(), |h| format!("{h:.2}")),
            p.power.map_or("-".into(), |c| format!("logistic {:.0}-{:.0} W", c.p_idle_w, c.nominal_w())),
        ]);
    }
    t
}

pub fn cmd_profiles(catalog: &ProfileCatalog) -> Outcome {
    let mut r = Report::new("profiles");
    let profiles: Vec<&GpuProfile> = catalog.iter().collect();
    r.tables.push(profile_table(&profiles));
    Outcome {
        report: r,
        feasible: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(extra: &str) -> Scenario {
        Scenario::from_toml(&format!(
            "seed = 3\nrequests = 2000\n[workload]\ncdf = \"azure\"\narrival_rate = 50.0\n[slo]\np99_ttft_ms = 500\ntpot_ms = 100\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn profiles_listing() {
        let out = cmd_profiles(&ProfileCatalog::builtin());
        let t = &out.report.tables[0];
        let row = |name: &str| t.rows.iter().find(|r| r[0] == name).unwrap().clone();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(row("A10G")[5], "64");
        assert_eq!(row("A100")[5], "128");
        assert_eq!(row("H100")[5], "256");
        assert_eq!((row("A100")[1].as_str(), row("A100")[2].as_str()), ("8", "0.65"));
        assert_eq!(row("A10G")[7], "8.85");
    }

    #[test]
    fn zero_slo_exits_infeasible() {
        let mut s = scenario("[sweep]\nb_short = [4096]\ngpus = [\"H100\"]\n");
        s.slo.p99_ttft_ms = 0.0;
        let out = cmd_optimize(&s).unwrap();
        assert_eq!(out.exit_code(), EXIT_INFEASIBLE);
    }

    #[test]
    fn optimize_on_fleet_scenario_is_usage_error() {
        let s = scenario("[[fleet]]\n[[fleet.pools]]\ngpu = \"H100\"\ncount = 4\ncontext = 8192\n");
        let e = cmd_optimize(&s).unwrap_err();
        assert_eq!(error_exit_code(&e), EXIT_USAGE);
    }

    #[test]
    fn simulate_is_deterministic() {
        let s = scenario("[[fleet]]\n[[fleet.pools]]\ngpu = \"H100\"\ncount = 4\ncontext = 8192\n");
        let a = cmd_simulate(&s, None).unwrap().report.render(ReportFormat::Table).unwrap();
        let b = cmd_simulate(&s, None).unwrap().report.render(ReportFormat::Table).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_request_has_degenerate_percentiles() {
        let mut s = scenario("[[fleet]]\n[[fleet.pools]]\ngpu = \"H100\"\ncount = 4\ncontext = 8192\n");
        s.requests = Some(1);
        let out = cmd_simulate(&s, None).unwrap();
        let fleet = out.report.tables[0].rows.last().unwrap().clone();
        assert_eq!(fleet[8], fleet[10]);
        assert_eq!(fleet[9], fleet[10]);
    }

    #[test]
    fn whatif_grid_shapes() {
        let s = scenario("[sweep]\nb_short = [8192]\ngpus = [\"H100\"]\ntop_k = 1\n[whatif]\nlambdas = [50.0]\n");
        assert_eq!(cmd_whatif(&s).unwrap().report.tables[0].rows.len(), 1);
        let s = scenario("[sweep]\nb_short = [8192]\ngpus = [\"H100\"]\n[whatif]\nlambdas = [50.0, 25.0]\n");
        let e = cmd_whatif(&s).unwrap_err();
        assert_eq!(error_exit_code(&e), EXIT_USAGE);
    }

    #[test]
    fn trace_only_for_simulate() {
        let s = scenario("[sweep]\nb_short = [8192]\ngpus = [\"H100\"]\n");
        let opts = RunOptions { trace: Some("x.csv".into()), ..Default::default() };
        assert!(matches!(run(Command::Optimize, &s, &opts), Err(Error::Config(_))));
    }
}
