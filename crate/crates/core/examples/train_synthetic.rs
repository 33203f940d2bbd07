//! Trains a model on synthetic exposure pairs and reports the loss drop.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [steps] [seed] [out.cdn]
//! ```

use std::time::Instant;

use cdfuse::data::synth_dataset;
use cdfuse::network::{save_model, ModelParams};
use cdfuse::train::{mean_loss, train_pairs_with, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let out = args.next();

    let pairs = synth_dataset(20, 64, 64, seed);
    let per_epoch = pairs.len().div_ceil(10);
    let cfg = TrainConfig { epochs: steps.div_ceil(per_epoch), max_steps: Some(steps), seed, threads: Some(1), ..Default::default() };
    let init = ModelParams::init(&cfg.model, &mut ChaCha8Rng::seed_from_u64(seed));
    let before = mean_loss(&init, &pairs, &cfg.loss())?;

    let t0 = Instant::now();
    let outcome = train_pairs_with(&cfg, &pairs, |e| {
        if e.epoch % 10 == 0 {
            println!("epoch {:>4}  hif {:.5}  lif {:.5}  total {:.5}", e.epoch, e.mean_hif, e.mean_lif, e.mean_total);
        }
    })?;
    let after = mean_loss(&outcome.params, &pairs, &cfg.loss())?;
    println!(
        "{} steps in {:.1?}: mean HLIF {:.5} -> {:.5} (ratio {:.3})",
        outcome.steps,
        t0.elapsed(),
        before.total,
        after.total,
        after.total / before.total
    );
    if let Some(path) = out {
        save_model(&outcome.params, &path)?;
        println!("model written to {path}");
    }
    Ok(())
}
