//! Trains on synthetic pairs, then scores a held-out pair against the
//! single-source baselines and checks self-fusion fidelity.
//!
//! ```text
//! cargo run --release --example evaluate_fusion -- [steps] [seed]
//! ```

use cdfuse::data::{synth_base, synth_dataset, synth_exposure_pair};
use cdfuse::metrics::{evaluate, psnr};
use cdfuse::network::fuse_luminance;
use cdfuse::train::{train_pairs, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let pairs = synth_dataset(20, 64, 64, seed);
    let cfg = TrainConfig { epochs: steps.div_ceil(2), max_steps: Some(steps), seed, ..Default::default() };
    let model = train_pairs(&cfg, &pairs)?.params;

    for held_out in 0..3u64 {
        let base = synth_base(64, 64, 9_000 + held_out);
        let (x, y) = synth_exposure_pair(&base, 2.5, 0.4, Some(0.005), 9_000 + held_out)?;
        let f = fuse_luminance(&model, &x, &y)?;
        let fused = evaluate(&f, &x, &y)?;
        let only_x = psnr(&x, &x, &y)?;
        let only_y = psnr(&y, &x, &y)?;
        let self_fused = fuse_luminance(&model, &x, &x)?;
        println!(
            "pair {held_out}: fused psnr {:.2} dB (x alone {:.2}, y alone {:.2}), ssim {:.3}, cc {:.3}, nabf {:.4}, self-fusion psnr {:.2} dB",
            fused.psnr,
            only_x,
            only_y,
            fused.ssim,
            fused.cc,
            fused.nabf,
            psnr(&self_fused, &x, &x)?
        );
    }
    Ok(())
}
