//! Synthetic exposure pairs and paired-file dataset directories.
//!
//! A dataset directory holds `<stem>_a.<ext>` / `<stem>_b.<ext>` files. Pairs
//! are listed sorted by stem; an unpaired file is a configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::color::{encode_image, load_luminance, ImageRGB};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_GAMMA_UNDER: f64 = 2.5;
pub const DEFAULT_GAMMA_OVER: f64 = 0.4;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.005;

/// Smooth random scene in `[0.02, 0.98]`: a tilted illumination ramp, soft
/// Gaussian blobs and a few hard-edged rectangles, so that both flat regions
/// and strong edges are present.
pub fn synth_base(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gx, gy) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(0.05..0.25) * h.max(w) as f64,
                rng.random_range(-0.6..0.6),
            )
        })
        .collect();
    let rects: Vec<(usize, usize, usize, usize, f64)> = (0..4)
        .map(|_| {
            let (i0, j0) = (rng.random_range(0..h), rng.random_range(0..w));
            let (i1, j1) = (rng.random_range(i0..=h), rng.random_range(j0..=w));
            (i0, i1, j0, j1, rng.random_range(-0.3..0.3))
        })
        .collect();
    let raw = Tensor::from_fn(&[1, h, w], |k| {
        let (i, j) = ((k / w) as f64, (k % w) as f64);
        let mut v = gx * i / h as f64 + gy * j / w as f64;
        for &(ci, cj, r, a) in &blobs {
            v += a * (-((i - ci).powi(2) + (j - cj).powi(2)) / (2.0 * r * r)).exp();
        }
        for &(i0, i1, j0, j1, a) in &rects {
            let (ii, jj) = (k / w, k % w);
            if (i0..i1).contains(&ii) && (j0..j1).contains(&jj) {
                v += a;
            }
        }
        v
    });
    let (lo, hi) = raw.data().iter().fold((f64::MAX, f64::MIN), |(l, u), &v| (l.min(v), u.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    raw.map(|v| 0.02 + 0.96 * (v - lo) / span)
}

/// Over-exposed `x = base^γ_over` and under-exposed `y = base^γ_under`, with
/// optional additive Gaussian noise (clamped back into `[0, 1]`).
pub fn synth_exposure_pair(
    base: &Tensor,
    gamma_under: f64,
    gamma_over: f64,
    noise_sigma: Option<f64>,
    seed: u64,
) -> Result<(Tensor, Tensor)> {
    if !(gamma_under > 0.0 && gamma_over > 0.0) {
        return Err(Error::Parameter(format!(
            "exposure gammas must be positive, got {gamma_under} and {gamma_over}"
        )));
    }
    let mut x = base.map(|v| v.clamp(0.0, 1.0).powf(gamma_over));
    let mut y = base.map(|v| v.clamp(0.0, 1.0).powf(gamma_under));
    if let Some(sigma) = noise_sigma.filter(|s| *s > 0.0) {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in [&mut x, &mut y] {
            for v in t.data_mut() {
                *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }
    Ok((x, y))
}

/// `count` noisy exposure pairs of size `h × w` with default gammas.
pub fn synth_dataset(count: usize, h: usize, w: usize, seed: u64) -> Vec<(Tensor, Tensor)> {
    (0..count as u64)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i);
            let base = synth_base(h, w, s);
            synth_exposure_pair(&base, DEFAULT_GAMMA_UNDER, DEFAULT_GAMMA_OVER, Some(DEFAULT_NOISE_SIGMA), s)
                .expect("default gammas are valid")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEntry {
    pub stem: String,
    pub a: PathBuf,
    pub b: PathBuf,
}

/// Lists the pairs of a dataset directory, sorted by stem.
pub fn list_pairs(dir: impl AsRef<Path>) -> Result<Vec<PairEntry>> {
    let dir = dir.as_ref();
    let mut found: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(file_stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let (stem, side) = if let Some(s) = file_stem.strip_suffix("_a") {
            (s, 0)
        } else if let Some(s) = file_stem.strip_suffix("_b") {
            (s, 1)
        } else {
            continue;
        };
        let slot = found.entry(stem.to_string()).or_default();
        let target = if side == 0 { &mut slot.0 } else { &mut slot.1 };
        if let Some(prev) = target.replace(path.clone()) {
            return Err(Error::Config(format!(
                "two candidates for one side of pair {stem:?}: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    found
        .into_iter()
        .map(|(stem, pair)| match pair {
            (Some(a), Some(b)) => Ok(PairEntry { stem, a, b }),
            _ => Err(Error::Config(format!("pair {stem:?} in {} is missing a partner file", dir.display()))),
        })
        .collect()
}

/// Loads the luminance planes of every pair; an empty directory is an error.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor, Tensor)>> {
    let dir = dir.as_ref();
    let pairs = list_pairs(dir)?;
    if pairs.is_empty() {
        return Err(Error::Config(format!("no `<stem>_a` / `<stem>_b` pairs in {}", dir.display())));
    }
    pairs
        .into_iter()
        .map(|p| {
            let x = load_luminance(&p.a)?;
            let y = load_luminance(&p.b)?;
            if x.shape() != y.shape() {
                return Err(Error::dim(format!("pair {:?} has mismatched sizes", p.stem)));
            }
            Ok((p.stem, x, y))
        })
        .collect()
}

/// Writes a gray pair as `<stem>_a.pgm` / `<stem>_b.pgm`.
pub fn write_pair(dir: impl AsRef<Path>, stem: &str, x: &Tensor, y: &Tensor) -> Result<()> {
    let dir = dir.as_ref();
    encode_image(&ImageRGB::from_gray(x)?, dir.join(format!("{stem}_a.pgm")))?;
    encode_image(&ImageRGB::from_gray(y)?, dir.join(format!("{stem}_b.pgm")))
}
