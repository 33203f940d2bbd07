//! Runs the tied-dictionary prototype (plain proximal gradient on the
//! combined dictionary) and prints the objective per iteration together
//! with the worst-case iteration bound.
//!
//! ```text
//! cargo run --release --example prototype_descent -- [seed] [iters]
//! ```

use cdfuse::cost::{sufficient_iterations, Prototype};
use cdfuse::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let iters: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);

    let proto = Prototype::random(3, 3, 16, 16, 0.1, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let z = Tensor::from_fn(&[6, 16, 16], |_| rng.random_range(-1.0..1.0));
    let (hist, w) = proto.run(&z, iters)?;
    println!("lipschitz estimate {:.4}", proto.lipschitz);
    for (t, f) in hist.iter().enumerate() {
        println!("{t:>4}  F = {f:.6}");
    }
    let nonzero = w.tensor().data().iter().filter(|v| **v != 0.0).count();
    println!("final sparsity: {nonzero} of {} coefficients non-zero", w.tensor().len());
    let dist = w.tensor().l2_norm();
    println!(
        "worst-case iterations for 1e-3 suboptimality from W = 0: {}",
        sufficient_iterations(proto.lipschitz, dist, 1e-3)?
    );
    Ok(())
}
