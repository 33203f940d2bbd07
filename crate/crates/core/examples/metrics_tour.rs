//! Scores simple fusion rules on a synthetic exposure pair with every
//! metric and writes the evaluation CSV to stdout.
//!
//! ```text
//! cargo run --release --example metrics_tour
//! ```

use cdfuse::data::{synth_base, synth_exposure_pair};
use cdfuse::metrics::{evaluate, write_eval_csv};

fn main() -> anyhow::Result<()> {
    let base = synth_base(64, 64, 3);
    let (x, y) = synth_exposure_pair(&base, 2.5, 0.4, Some(0.005), 3)?;
    let average = x.add(&y)?.scale(0.5);
    let weighted = x.scale(0.3).add(&y.scale(0.7))?;
    let noisy = average.map(|v| (v + 0.05 * (v * 1e4).sin()).clamp(0.0, 1.0));
    let rows = vec![
        ("x only".to_string(), evaluate(&x, &x, &y)?),
        ("y only".to_string(), evaluate(&y, &x, &y)?),
        ("average".to_string(), evaluate(&average, &x, &y)?),
        ("0.3 x + 0.7 y".to_string(), evaluate(&weighted, &x, &y)?),
        ("average + ripple".to_string(), evaluate(&noisy, &x, &y)?),
        ("latent scene".to_string(), evaluate(&base, &x, &y)?),
    ];
    write_eval_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}
