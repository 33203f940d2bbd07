//! The end-to-end luminance fuser: feature expansion, `T` unfolded blocks and
//! the fusion/reconstruction head, plus parameter bookkeeping and the `.cdn`
//! weight format.

use std::path::Path;

use rand::Rng;

use crate::cdblock::{
    alternating_step, cdblock_step_traced, CDBlockParams, CombinedRepresentation, StepTrace,
};
use crate::error::{Error, Result};
use crate::tensor::{conv2d_counted, MulCount, Tensor};

pub const MAGIC: &[u8; 4] = b"CDN1";
const HEADER_LEN: usize = 16;

/// Initial value of every learnable threshold.
pub const INIT_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Number of unfolded blocks `T`.
    pub blocks: usize,
    /// Channels per representation slab `C`.
    pub channels: usize,
    /// Dictionary kernel size `s` (odd).
    pub kernel_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { blocks: 3, channels: 5, kernel_size: 3 }
    }
}

impl ModelConfig {
    /// `T = 0` is admitted for degenerate bookkeeping; the fuser itself needs `T ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Parameter("channel count must be at least 1".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}

/// Which decomposition update the blocks run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Joint block-structured step over `W`.
    #[default]
    Unified,
    /// Cyclic `Z_X → Z_Y → Z_C` sweep with the same kernels.
    Alternating,
}

/// Full learnable state, bias-free.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub expand_x: Tensor,
    pub expand_y: Tensor,
    pub blocks: Vec<CDBlockParams>,
    /// `2C × 3C × 1 × 1`
    pub d_f1: Tensor,
    /// `C × 2C × 1 × 1`
    pub d_f2: Tensor,
    /// `1 × C × 1 × 1`
    pub proj: Tensor,
}

/// Total number of learnable reals for `config`.
///
/// `2·C·s²` expansion, `T·(8·C²·s² + 3C)` blocks, `6C² + 2C² + C` head.
pub fn parameter_count(config: &ModelConfig) -> usize {
    checked_parameter_count(config).expect("parameter count overflows usize")
}

/// [`parameter_count`] that reports overflow instead of panicking.
pub fn checked_parameter_count(config: &ModelConfig) -> Option<usize> {
    let (t, c, s) = (config.blocks, config.channels, config.kernel_size);
    let c2s2 = c.checked_mul(c)?.checked_mul(s)?.checked_mul(s)?;
    let block = c2s2.checked_mul(8)?.checked_add(c.checked_mul(3)?)?;
    let expansion = c.checked_mul(s)?.checked_mul(s)?.checked_mul(2)?;
    let head = c.checked_mul(c)?.checked_mul(8)?.checked_add(c)?;
    t.checked_mul(block)?.checked_add(expansion)?.checked_add(head)
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (c, s) = (config.channels, config.kernel_size);
        ModelParams {
            expand_x: Tensor::zeros(&[c, 1, s, s]),
            expand_y: Tensor::zeros(&[c, 1, s, s]),
            blocks: (0..config.blocks).map(|_| CDBlockParams::zeros(c, s)).collect(),
            d_f1: Tensor::zeros(&[2 * c, 3 * c, 1, 1]),
            d_f2: Tensor::zeros(&[c, 2 * c, 1, 1]),
            proj: Tensor::zeros(&[1, c, 1, 1]),
        }
    }

    /// Kernel scale `a = 1/fan_in` with `fan_in = Cin·k²` (so `1/(C·s²)` for
    /// the dictionary kernels). Dictionary kernels and `d_F1` are uniform in
    /// `[-a, a]`. The kernels on the path from the sources to the output
    /// (expansion, `d_F2`, projection) are uniform in `[0, 2a]`, so the
    /// untrained network already produces a smoothed blend of the sources
    /// instead of a random-sign map that the output clamp flattens to black.
    /// Thresholds start at [`INIT_THRESHOLD`].
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(config);
        let fill = |t: &mut Tensor, positive: bool, rng: &mut dyn FnMut(f64, f64) -> f64| {
            let [_, cin, k, _] = t.shape()[..] else { unreachable!("kernels are 4-d") };
            let a = 1.0 / (cin * k * k) as f64;
            let (lo, hi) = if positive { (0.0, 2.0 * a) } else { (-a, a) };
            for v in t.data_mut() {
                *v = rng(lo, hi);
            }
        };
        let mut draw = |lo: f64, hi: f64| rng.random_range(lo..=hi);
        fill(&mut p.expand_x, true, &mut draw);
        fill(&mut p.expand_y, true, &mut draw);
        for b in &mut p.blocks {
            let [ux_f, uy_f, cx_f, cy_f, ux_a, uy_a, cx_a, cy_a, theta] = b.tensors_mut();
            for k in [ux_f, uy_f, cx_f, cy_f, ux_a, uy_a, cx_a, cy_a] {
                fill(k, false, &mut draw);
            }
            theta.data_mut().fill(INIT_THRESHOLD);
        }
        fill(&mut p.d_f1, false, &mut draw);
        fill(&mut p.d_f2, true, &mut draw);
        fill(&mut p.proj, true, &mut draw);
        p
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            blocks: self.blocks.len(),
            channels: self.expand_x.shape()[0],
            kernel_size: self.expand_x.shape()[2],
        }
    }

    /// All tensors in serialization order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.expand_x, &self.expand_y];
        for b in &self.blocks {
            v.extend(b.tensors());
        }
        v.extend([&self.d_f1, &self.d_f2, &self.proj]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.expand_x, &mut self.expand_y];
        for b in &mut self.blocks {
            v.extend(b.tensors_mut());
        }
        v.extend([&mut self.d_f1, &mut self.d_f2, &mut self.proj]);
        v
    }

    pub fn num_reals(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = self.config();
        let reference = ModelParams::zeros(&cfg);
        for (got, want) in self.tensors().iter().zip(reference.tensors()) {
            if got.shape() != want.shape() {
                return Err(Error::dim(format!(
                    "parameter tensor has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.num_reals());
        out.extend_from_slice(MAGIC);
        for v in [cfg.blocks, cfg.channels, cfg.kernel_size] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for t in self.tensors() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::format(0, "bad magic, expected \"CDN1\""));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(bytes.len(), "truncated header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let cfg = ModelConfig { blocks: word(0), channels: word(1), kernel_size: word(2) };
        cfg.validate().map_err(|e| Error::format(4, e.to_string()))?;
        let payload = checked_parameter_count(&cfg)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(4, "header declares an impossibly large model"))?;
        let end = HEADER_LEN + payload;
        if bytes.len() < end {
            return Err(Error::format(
                bytes.len(),
                format!("truncated payload: header declares {end} bytes, file has {}", bytes.len()),
            ));
        }
        if bytes.len() > end {
            return Err(Error::format(end, format!("{} trailing bytes after payload", bytes.len() - end)));
        }
        let mut params = ModelParams::zeros(&cfg);
        let mut off = HEADER_LEN;
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                *v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
                off += 4;
            }
        }
        Ok(params)
    }

    /// Like [`from_bytes`](Self::from_bytes) but also requires a given architecture.
    pub fn from_bytes_expecting(bytes: &[u8], expected: &ModelConfig) -> Result<Self> {
        let p = Self::from_bytes(bytes)?;
        if p.config() != *expected {
            return Err(Error::format(4, format!("config mismatch: file has {:?}, expected {expected:?}", p.config())));
        }
        Ok(p)
    }

    /// Rounds every parameter to the nearest `f32`, as a save/load would.
    pub fn narrowed(&self) -> Self {
        let mut p = self.clone();
        for t in p.tensors_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        p
    }
}

pub fn save_model(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, params.to_bytes()).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    ModelParams::from_bytes(&bytes)
}

fn check_pair(x: &Tensor, y: &Tensor) -> Result<(usize, usize)> {
    let (cx, h, w) = x.chw()?;
    let (cy, hy, wy) = y.chw()?;
    if cx != 1 || cy != 1 {
        return Err(Error::dim(format!("luminance inputs must be single-channel, got {cx} and {cy}")));
    }
    if (h, w) != (hy, wy) {
        return Err(Error::dim(format!("source sizes differ: {h}x{w} vs {hy}x{wy}")));
    }
    Ok((h, w))
}

/// `Z = [expand_x ⊗ x ; expand_y ⊗ y]`.
pub fn expand(params: &ModelParams, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    expand_counted(params, x, y, &mut MulCount::default())
}

fn expand_counted(params: &ModelParams, x: &Tensor, y: &Tensor, n: &mut MulCount) -> Result<Tensor> {
    check_pair(x, y)?;
    let zx = conv2d_counted(x, &params.expand_x, n)?;
    let zy = conv2d_counted(y, &params.expand_y, n)?;
    Tensor::concat_channels(&[&zx, &zy])
}

/// Every intermediate of a unified forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub z: Tensor,
    /// One trace per block; the last output is the refined representation.
    pub steps: Vec<StepTrace>,
    /// `d_F1 ⊗ W + Z`
    pub mixed: Tensor,
    /// `F = d_F2 ⊗ mixed`
    pub fused_features: Tensor,
    /// `proj ⊗ F`, before clamping.
    pub projected: Tensor,
    /// `clamp(projected, 0, 1)`
    pub output: Tensor,
}

pub fn forward_traced(params: &ModelParams, x: &Tensor, y: &Tensor) -> Result<ForwardTrace> {
    let mut n = MulCount::default();
    let (h, w) = check_pair(x, y)?;
    if params.blocks.is_empty() {
        return Err(Error::Parameter("model has no blocks".into()));
    }
    let c = params.config().channels;
    let z = expand_counted(params, x, y, &mut n)?;
    let mut steps: Vec<StepTrace> = Vec::with_capacity(params.blocks.len());
    let mut wcur = CombinedRepresentation::zeros(c, h, w);
    for b in &params.blocks {
        let st = cdblock_step_traced(b, &wcur, &z, &mut n)?;
        wcur = st.output.clone();
        steps.push(st);
    }
    let (mixed, fused_features, projected) = head(params, wcur.tensor(), &z, &mut n)?;
    let output = projected.map(|v| v.clamp(0.0, 1.0));
    Ok(ForwardTrace { z, steps, mixed, fused_features, projected, output })
}

fn head(params: &ModelParams, w: &Tensor, z: &Tensor, n: &mut MulCount) -> Result<(Tensor, Tensor, Tensor)> {
    let mixed = conv2d_counted(w, &params.d_f1, n)?.add(z)?;
    // the X and Y halves are mixed separately and added plane-wise, so that
    // swapping the halves (with mirrored kernels) gives bit-identical output
    let c = params.config().channels;
    let fused = conv2d_counted(&mixed.channels(0, c)?, &input_slice(&params.d_f2, 0, c), n)?
        .add(&conv2d_counted(&mixed.channels(c, c)?, &input_slice(&params.d_f2, c, c), n)?)?;
    let projected = conv2d_counted(&fused, &params.proj, n)?;
    Ok((mixed, fused, projected))
}

/// Input channels `start..start+count` of a `Cout × Cin × k × k` kernel.
fn input_slice(kernel: &Tensor, start: usize, count: usize) -> Tensor {
    let [cout, cin, k, _] = kernel.shape()[..] else { unreachable!("kernels are rank 4") };
    let kk = k * k;
    Tensor::from_fn(&[cout, count, k, k], |i| {
        let (o, rest) = (i / (count * kk), i % (count * kk));
        kernel.data()[o * cin * kk + start * kk + rest]
    })
}

/// Fused luminance `f = clamp(proj ⊗ d_F2 ⊗ (d_F1 ⊗ W + Z), 0, 1)`.
pub fn fuse_luminance(params: &ModelParams, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    fuse_luminance_with(params, x, y, UpdateMode::Unified).map(|(f, _)| f)
}

/// Runs the fuser with the chosen block update and reports the number of
/// multiplications spent in kernel applications over the whole network.
pub fn fuse_luminance_with(
    params: &ModelParams,
    x: &Tensor,
    y: &Tensor,
    mode: UpdateMode,
) -> Result<(Tensor, MulCount)> {
    if mode == UpdateMode::Unified {
        let mut n = MulCount::default();
        let (h, w) = check_pair(x, y)?;
        if params.blocks.is_empty() {
            return Err(Error::Parameter("model has no blocks".into()));
        }
        let c = params.config().channels;
        let z = expand_counted(params, x, y, &mut n)?;
        let mut wcur = CombinedRepresentation::zeros(c, h, w);
        for b in &params.blocks {
            wcur = cdblock_step_traced(b, &wcur, &z, &mut n)?.output;
        }
        let (_, _, projected) = head(params, wcur.tensor(), &z, &mut n)?;
        return Ok((projected.map(|v| v.clamp(0.0, 1.0)), n));
    }

    let mut n = MulCount::default();
    let (h, w) = check_pair(x, y)?;
    if params.blocks.is_empty() {
        return Err(Error::Parameter("model has no blocks".into()));
    }
    let c = params.config().channels;
    let z = expand_counted(params, x, y, &mut n)?;
    let xs = z.channels(0, c)?;
    let ys = z.channels(c, c)?;
    let zero = Tensor::zeros(&[c, h, w]);
    let (mut zx, mut zy, mut zc) = (zero.clone(), zero.clone(), zero);
    for b in &params.blocks {
        let (st, cnt) = alternating_step(b, &zx, &zy, &zc, &xs, &ys)?;
        n.0 += cnt.0;
        (zx, zy, zc) = (st.zx, st.zy, st.zc);
    }
    let wfinal = Tensor::concat_channels(&[&zx, &zy, &zc])?;
    let (_, _, projected) = head(params, &wfinal, &z, &mut n)?;
    Ok((projected.map(|v| v.clamp(0.0, 1.0)), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[1, h, w], |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn default_count_is_5740() {
        assert_eq!(parameter_count(&ModelConfig::default()), 5740);
        let cfg0 = ModelConfig { blocks: 0, ..Default::default() };
        assert_eq!(parameter_count(&cfg0), 295);
        assert_eq!(ModelParams::zeros(&cfg0).num_reals(), 295);
    }

    #[test]
    fn doubling_channels_quadruples_block_term() {
        let block = |c| {
            let with = parameter_count(&ModelConfig { blocks: 1, channels: c, kernel_size: 3 });
            let without = parameter_count(&ModelConfig { blocks: 0, channels: c, kernel_size: 3 });
            (with - without) as f64
        };
        let r = block(40) / block(20);
        assert!((r - 4.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn count_matches_tensors_for_various_configs() {
        for (t, c, s) in [(1, 1, 1), (3, 5, 3), (2, 4, 5), (5, 2, 3)] {
            let cfg = ModelConfig { blocks: t, channels: c, kernel_size: s };
            assert_eq!(ModelParams::zeros(&cfg).num_reals(), parameter_count(&cfg));
        }
    }

    #[test]
    fn zero_model_outputs_black() {
        let p = ModelParams::zeros(&ModelConfig::default());
        let f = fuse_luminance(&p, &image(9, 7, 1), &image(9, 7, 2)).unwrap();
        assert_eq!(f, Tensor::zeros(&[1, 9, 7]));
    }

    #[test]
    fn output_preserves_spatial_extent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::init(&ModelConfig::default(), &mut rng);
        for (h, w) in [(8, 8), (17, 17), (256, 256), (5, 11)] {
            let f = fuse_luminance(&p, &image(h, w, 4), &image(h, w, 5)).unwrap();
            assert_eq!(f.shape(), [1, h, w]);
        }
    }

    #[test]
    fn expand_zero_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = ModelParams::zeros(&ModelConfig::default());
        let x = image(6, 6, 7);
        assert_eq!(expand(&p, &x, &x).unwrap(), Tensor::zeros(&[10, 6, 6]));
        p.expand_x = Tensor::from_fn(&[5, 1, 3, 3], |_| rng.random_range(-1.0..1.0));
        p.expand_y = p.expand_x.clone();
        let z = expand(&p, &x, &x).unwrap();
        assert_eq!(z.channels(0, 5).unwrap(), z.channels(5, 5).unwrap());
    }

    #[test]
    fn delta_expansion_replicates_input() {
        let mut p = ModelParams::zeros(&ModelConfig::default());
        for k in [&mut p.expand_x, &mut p.expand_y] {
            for c in 0..5 {
                k.data_mut()[c * 9 + 4] = 1.0;
            }
        }
        let (x, y) = (image(6, 5, 8), image(6, 5, 9));
        let z = expand(&p, &x, &y).unwrap();
        for c in 0..5 {
            assert_eq!(z.channels(c, 1).unwrap(), x);
            assert_eq!(z.channels(5 + c, 1).unwrap(), y);
        }
    }

    #[test]
    fn mismatched_sources_rejected() {
        let p = ModelParams::zeros(&ModelConfig::default());
        assert!(matches!(
            fuse_luminance(&p, &image(8, 8, 1), &image(8, 9, 2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn symmetric_parameters_give_symmetric_fusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = ModelConfig::default();
        let mut p = ModelParams::init(&cfg, &mut rng);
        let c = cfg.channels;
        p.expand_y = p.expand_x.clone();
        for b in &mut p.blocks {
            b.uy_f = b.ux_f.clone();
            b.cy_f = b.cx_f.clone();
            b.uy_a = b.ux_a.clone();
            b.cy_a = b.cx_a.clone();
            let th = b.theta.data().to_vec();
            b.theta.data_mut()[c..2 * c].copy_from_slice(&th[..c]);
        }
        // head: d_F1 = [[A, 0, E], [0, A, E]], d_F2 = [G, G]
        let (a, e, g): (Vec<f64>, Vec<f64>, Vec<f64>) = (
            (0..c * c).map(|_| rng.random_range(-0.2..0.2)).collect(),
            (0..c * c).map(|_| rng.random_range(-0.2..0.2)).collect(),
            (0..c * c).map(|_| rng.random_range(-0.2..0.2)).collect(),
        );
        let f1 = p.d_f1.data_mut();
        f1.fill(0.0);
        for o in 0..c {
            for i in 0..c {
                f1[o * 3 * c + i] = a[o * c + i];
                f1[(c + o) * 3 * c + c + i] = a[o * c + i];
                f1[o * 3 * c + 2 * c + i] = e[o * c + i];
                f1[(c + o) * 3 * c + 2 * c + i] = e[o * c + i];
            }
        }
        let f2 = p.d_f2.data_mut();
        for o in 0..c {
            for i in 0..c {
                f2[o * 2 * c + i] = g[o * c + i];
                f2[o * 2 * c + c + i] = g[o * c + i];
            }
        }
        p.proj.data_mut().fill(0.3);
        let (x, y) = (image(12, 10, 11), image(12, 10, 12));
        let fxy = fuse_luminance(&p, &x, &y).unwrap();
        let fyx = fuse_luminance(&p, &y, &x).unwrap();
        assert_eq!(fxy, fyx);
        let wx = forward_traced(&p, &x, &y).unwrap().steps.last().unwrap().output.clone();
        let wy = forward_traced(&p, &y, &x).unwrap().steps.last().unwrap().output.clone();
        assert_eq!(wx.zx(), wy.zy());
        assert_eq!(wx.zc(), wy.zc());
    }

    #[test]
    fn traced_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = ModelParams::init(&ModelConfig::default(), &mut rng);
        let (x, y) = (image(10, 9, 14), image(10, 9, 15));
        assert_eq!(forward_traced(&p, &x, &y).unwrap().output, fuse_luminance(&p, &x, &y).unwrap());
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let p = ModelParams::init(&ModelConfig::default(), &mut rng);
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 16 + 4 * 5740);
        assert_eq!(ModelParams::from_bytes(&bytes).unwrap(), p.narrowed());
    }

    #[test]
    fn load_rejects_bad_magic() {
        let mut bytes = ModelParams::zeros(&ModelConfig::default()).to_bytes();
        bytes[0] = b'X';
        let err = ModelParams::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("CDN1"), "{err}");
    }

    #[test]
    fn load_rejects_truncation() {
        let bytes = ModelParams::zeros(&ModelConfig::default()).to_bytes();
        let err = ModelParams::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { offset, .. } if offset == bytes.len() - 3));
        assert!(err.to_string().contains("truncated"));
        assert!(ModelParams::from_bytes(&bytes[..10]).is_err());
        let mut huge = bytes[..16].to_vec();
        huge[4..16].copy_from_slice(&[0xff; 12]);
        huge[12] = 0xfd;
        assert!(matches!(ModelParams::from_bytes(&huge), Err(Error::Format { .. })));
    }

    #[test]
    fn load_rejects_config_mismatch() {
        let bytes = ModelParams::zeros(&ModelConfig::default()).to_bytes();
        let other = ModelConfig { blocks: 2, ..Default::default() };
        assert!(ModelParams::from_bytes_expecting(&bytes, &other).is_err());
        let mut even = bytes.clone();
        even[12..16].copy_from_slice(&4u32.to_le_bytes());
        assert!(ModelParams::from_bytes(&even).is_err());
    }

    #[test]
    fn alternating_mode_runs_with_same_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = ModelParams::init(&ModelConfig::default(), &mut rng);
        let (x, y) = (image(16, 16, 18), image(16, 16, 19));
        let (fu, nu) = fuse_luminance_with(&p, &x, &y, UpdateMode::Unified).unwrap();
        let (fa, na) = fuse_luminance_with(&p, &x, &y, UpdateMode::Alternating).unwrap();
        assert_eq!(fu.shape(), fa.shape());
        assert!(na > nu);
    }
}
