//! Closed-form multiplication counts of the joint and alternating updates,
//! checked against instrumented counts of one block.
//!
//! ```text
//! cargo run --release --example cost_report -- [size]
//! ```

use cdfuse::cost::{count_block_mults, CostReport};
use cdfuse::network::{ModelConfig, UpdateMode};

fn main() -> anyhow::Result<()> {
    let size: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(256);
    print!("{}", CostReport::new(2, 3, 5, size, size)?);
    println!();
    println!("{:>3} {:>10}", "N", "reduction");
    for n in 1..=6 {
        let r = CostReport::new(n, 3, 5, size, size)?;
        println!("{n:>3} {:>9.2}%", 100.0 * r.reduction);
    }

    let cfg = ModelConfig::default();
    let side = size.min(64) as usize;
    let uni = count_block_mults(UpdateMode::Unified, &cfg, side, side)?;
    let alt = count_block_mults(UpdateMode::Alternating, &cfg, side, side)?;
    println!();
    println!("instrumented at {side}x{side}: unified {uni}, alternating {alt}, ratio {:.4}", alt as f64 / uni as f64);
    Ok(())
}
