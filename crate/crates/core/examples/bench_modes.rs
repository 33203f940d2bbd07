//! Times whole-image fusion with joint versus alternating block updates at
//! equal parameters, on the calling thread.
//!
//! ```text
//! cargo run --release --example bench_modes -- [size] [runs]
//! ```

use cdfuse::cost::{bench_interleaved, BENCH_CSV_HEADER};
use cdfuse::data::{synth_base, synth_exposure_pair};
use cdfuse::network::{ModelConfig, ModelParams, UpdateMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(256);
    let runs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let params = ModelParams::init(&ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
    let (x, y) = synth_exposure_pair(&synth_base(size, size, 1), 2.5, 0.4, None, 1)?;
    println!("{BENCH_CSV_HEADER}");
    let reports = bench_interleaved(&params, &[UpdateMode::Unified, UpdateMode::Alternating], &x, &y, 5, runs)?;
    for r in &reports {
        println!("{}", r.csv_row());
    }
    println!("alternating / unified wall clock: {:.3}", reports[1].median_ms / reports[0].median_ms);
    Ok(())
}
