//! Round analytical GPU counts up for node failures.

use fleetsim::reliability::{availability, builtin_availability_constants, production_count};

fn main() -> fleetsim::Result<()> {
    let a = availability(0.002, 2.0)?;
    println!("r_f=0.002/day, MTTR=2 days: A={a:.4}, 20 GPUs -> {}", production_count(20, a)?);
    for (name, a) in builtin_availability_constants() {
        println!("{name:<22} A={a:.4}  20 -> {:>2}  100 -> {}", production_count(20, a)?, production_count(100, a)?);
    }
    Ok(())
}
