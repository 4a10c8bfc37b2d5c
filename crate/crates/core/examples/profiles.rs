//! Built-in GPU profiles, plus a custom one loaded from JSON overrides.

use fleetsim::gpu::ProfileCatalog;

fn main() -> fleetsim::Result<()> {
    let mut catalog = ProfileCatalog::builtin();
    catalog.apply_overrides(r#"{"A100": {"annual_cost_usd": 17000}}"#)?;
    for g in catalog.iter() {
        println!(
            "{:<5} W {:>4.1} ms  H {:.2} ms/seq  n_max@8K {:>4}  t_iter(128) {:>5.1} ms  ${:.2}K/yr",
            g.name,
            g.w_ms,
            g.h_ms_per_slot,
            g.n_max(8192)?,
            g.t_iter_ms(128),
            g.annual_cost_usd / 1000.0
        );
    }
    Ok(())
}
