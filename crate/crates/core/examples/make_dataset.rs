//! Writes synthetic exposure pairs as `<stem>_a.pgm` / `<stem>_b.pgm`, the
//! directory layout read by the `train` and `eval` subcommands.
//!
//! ```text
//! cargo run --release --example make_dataset -- <dir> [count] [size] [seed]
//! ```

use cdfuse::data::{synth_dataset, write_pair};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().ok_or_else(|| anyhow::anyhow!("usage: make_dataset <dir> [count] [size] [seed]"))?;
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&dir)?;
    for (i, (x, y)) in synth_dataset(count, size, size, seed).iter().enumerate() {
        write_pair(&dir, &format!("pair{i:03}"), x, y)?;
    }
    println!("wrote {count} pairs of {size}x{size} to {dir}");
    Ok(())
}
