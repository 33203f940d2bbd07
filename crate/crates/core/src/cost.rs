//! Multiplication-count cost model for joint versus alternating updates, plus
//! the fixed-dictionary prototype used to study descent and iteration bounds.
//!
//! Counts are per sparse-coding step: one multiplication per kernel tap per
//! output element, padding taps included.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cdblock::{
    alternating_step, cdblock_step_counted, dict_adjoint, dict_forward, CDBlockParams,
    CombinedRepresentation,
};
use crate::error::{Error, Result};
use crate::network::{fuse_luminance_with, parameter_count, ModelConfig, ModelParams, UpdateMode};
use crate::tensor::{MulCount, Tensor};

fn check_extents(n: u64, s: u64, c: u64, h: u64, w: u64) -> Result<()> {
    if n == 0 || s == 0 || c == 0 || h == 0 || w == 0 {
        return Err(Error::Config(format!(
            "cost extents must be positive, got N={n} s={s} C={c} H={h} W={w}"
        )));
    }
    Ok(())
}

/// `(5 + N)·N·s²·H·W·C²` for one alternating sweep over `N` sources.
pub fn m_am(n: u64, s: u64, c: u64, h: u64, w: u64) -> u128 {
    let (n, s, c, h, w) = (n as u128, s as u128, c as u128, h as u128, w as u128);
    (5 + n) * n * s * s * h * w * c * c
}

/// `4·N·s²·H·W·C²` for one joint step.
pub fn m_joint(n: u64, s: u64, c: u64, h: u64, w: u64) -> u128 {
    let (n, s, c, h, w) = (n as u128, s as u128, c as u128, h as u128, w as u128);
    4 * n * s * s * h * w * c * c
}

/// Relative saving `(N + 1)/(N + 5)` as an exact fraction (numerator, denominator).
pub fn reduction_exact(n: u64) -> (u64, u64) {
    (n + 1, n + 5)
}

pub fn reduction(n: u64) -> f64 {
    let (p, q) = reduction_exact(n);
    p as f64 / q as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub n: u64,
    pub s: u64,
    pub c: u64,
    pub h: u64,
    pub w: u64,
    pub m_am: u128,
    pub m_joint: u128,
    pub reduction: f64,
}

pub const COST_CSV_HEADER: &str = "n,s,c,h,w,m_am,m_joint,reduction";

impl CostReport {
    pub fn new(n: u64, s: u64, c: u64, h: u64, w: u64) -> Result<Self> {
        check_extents(n, s, c, h, w)?;
        let am = m_am(n, s, c, h, w);
        let joint = m_joint(n, s, c, h, w);
        Ok(CostReport { n, s, c, h, w, m_am: am, m_joint: joint, reduction: reduction(n) })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6}",
            self.n, self.s, self.c, self.h, self.w, self.m_am, self.m_joint, self.reduction
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{COST_CSV_HEADER}\n{}\n", self.csv_row())
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 8] = [
            ("sources N", self.n.to_string()),
            ("kernel s", self.s.to_string()),
            ("channels C", self.c.to_string()),
            ("height H", self.h.to_string()),
            ("width W", self.w.to_string()),
            ("M_AM", self.m_am.to_string()),
            ("M_Joint", self.m_joint.to_string()),
            ("reduction", format!("{:.2}%", 100.0 * self.reduction)),
        ];
        let vw = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:<12}{v:>vw$}")?;
        }
        Ok(())
    }
}

/// Runs one block update of the chosen kind on random data and returns the
/// multiplications spent in kernel applications (thresholds, expansion and
/// head excluded).
pub fn count_block_mults(mode: UpdateMode, config: &ModelConfig, h: usize, w: usize) -> Result<u64> {
    config.validate()?;
    let (c, s) = (config.channels, config.kernel_size);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = CDBlockParams::random(c, s, 0.1, 0.01, &mut rng);
    let mut field = |ch| Tensor::from_fn(&[ch, h, w], |_| rng.random_range(-1.0..1.0));
    match mode {
        UpdateMode::Unified => {
            let wprev = CombinedRepresentation::new(field(3 * c))?;
            let z = field(2 * c);
            let mut n = MulCount::default();
            cdblock_step_counted(&params, &wprev, &z, &mut n)?;
            Ok(n.0)
        }
        UpdateMode::Alternating => {
            let (zx, zy, zc, x, y) = (field(c), field(c), field(c), field(c), field(c));
            let (_, n) = alternating_step(&params, &zx, &zy, &zc, &x, &y)?;
            Ok(n.0)
        }
    }
}

/// Wall-clock and operation counts of whole-image fusion in one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub mode: UpdateMode,
    pub params: usize,
    pub size: usize,
    pub median_ms: f64,
    /// Kernel multiplications of one block update.
    pub block_mults: u64,
    /// Kernel multiplications of one whole forward pass.
    pub network_mults: u64,
}

pub const BENCH_CSV_HEADER: &str = "mode,params,size,median_ms,block_mults,network_mults";

impl BenchReport {
    pub fn csv_row(&self) -> String {
        let mode = match self.mode {
            UpdateMode::Unified => "unified",
            UpdateMode::Alternating => "alternating",
        };
        format!(
            "{mode},{},{},{:.3},{},{}",
            self.params, self.size, self.median_ms, self.block_mults, self.network_mults
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `runs` fusions of a `size × size` pair after `warmup` untimed ones,
/// on the calling thread.
pub fn bench_fusion(
    params: &ModelParams,
    mode: UpdateMode,
    x: &Tensor,
    y: &Tensor,
    warmup: usize,
    runs: usize,
) -> Result<BenchReport> {
    Ok(bench_interleaved(params, &[mode], x, y, warmup, runs)?.remove(0))
}

/// Like [`bench_fusion`] for several modes at once. Every round runs each
/// mode once in turn, so all modes see the same machine load.
pub fn bench_interleaved(
    params: &ModelParams,
    modes: &[UpdateMode],
    x: &Tensor,
    y: &Tensor,
    warmup: usize,
    runs: usize,
) -> Result<Vec<BenchReport>> {
    if runs == 0 || modes.is_empty() {
        return Err(Error::Config("bench needs at least one mode and one timed run".into()));
    }
    let (_, h, w) = x.chw()?;
    if h != w {
        return Err(Error::dim(format!("bench expects a square pair, got {h}x{w}")));
    }
    let mut network_mults = vec![0; modes.len()];
    let mut times = vec![Vec::with_capacity(runs); modes.len()];
    for round in 0..warmup + runs {
        for (k, &mode) in modes.iter().enumerate() {
            let t0 = Instant::now();
            let (_, n) = fuse_luminance_with(params, x, y, mode)?;
            if round >= warmup {
                times[k].push(t0.elapsed().as_secs_f64() * 1e3);
            }
            network_mults[k] = n.0;
        }
    }
    let config = params.config();
    modes
        .iter()
        .zip(times)
        .zip(network_mults)
        .map(|((&mode, t), network_mults)| {
            Ok(BenchReport {
                mode,
                params: parameter_count(&config),
                size: h,
                median_ms: median(t),
                block_mults: count_block_mults(mode, &config, h, w)?,
                network_mults,
            })
        })
        .collect()
}

/// `⌈L·dist0²/(2ε)⌉`: a worst-case reference for proximal-gradient iterations
/// to reach ε-suboptimality, not a guarantee for the learned network.
pub fn sufficient_iterations(lipschitz: f64, dist0: f64, eps: f64) -> Result<u64> {
    if !(lipschitz > 0.0 && eps > 0.0 && dist0 >= 0.0) {
        return Err(Error::Parameter(format!(
            "need L > 0, ε > 0, dist0 ≥ 0; got L={lipschitz}, ε={eps}, dist0={dist0}"
        )));
    }
    Ok((lipschitz * dist0 * dist0 / (2.0 * eps)).ceil() as u64)
}

/// Fixed combined dictionary `D` with `min_W ½‖Z − D⊗W‖² + λ‖W‖₁`, solved by
/// proximal gradient with step `1/L`, i.e. a CDBlock with `d_U = Dᵀ/L` and
/// thresholds `λ/L`.
#[derive(Debug, Clone)]
pub struct Prototype {
    /// Forward kernels `[U_X, U_Y, C_X, C_Y]`, each `C × C × s × s`.
    pub dictionary: CDBlockParams,
    pub lambda: f64,
    /// Estimate of `‖D‖²` from power iteration on the given extent.
    pub lipschitz: f64,
    pub height: usize,
    pub width: usize,
}

impl Prototype {
    /// Random dictionary with kernels uniform in `[-1, 1]`. The Lipschitz
    /// constant is a power-iteration estimate, inflated by 1% for safety.
    pub fn random(channels: usize, kernel_size: usize, h: usize, w: usize, lambda: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = CDBlockParams::random(channels, kernel_size, 1.0, 0.0, &mut rng);
        d.ux_a = d.ux_f.clone();
        d.uy_a = d.uy_f.clone();
        d.cx_a = d.cx_f.clone();
        d.cy_a = d.cy_f.clone();
        let l = power_iteration(&d, h, w, 200, &mut rng)? * 1.01;
        Ok(Prototype { dictionary: d, lambda, lipschitz: l, height: h, width: w })
    }

    pub fn objective(&self, w: &CombinedRepresentation, z: &Tensor) -> Result<f64> {
        let r = dict_forward(&self.dictionary, w)?.sub(z)?;
        Ok(0.5 * r.dot(&r)? + self.lambda * w.tensor().l1_sum())
    }

    /// Block parameters realizing one proximal-gradient step.
    pub fn step_params(&self) -> CDBlockParams {
        let c = self.dictionary.channels();
        let inv = 1.0 / self.lipschitz;
        let mut p = self.dictionary.clone();
        p.ux_a = p.ux_a.scale(inv);
        p.uy_a = p.uy_a.scale(inv);
        p.cx_a = p.cx_a.scale(inv);
        p.cy_a = p.cy_a.scale(inv);
        p.theta = Tensor::filled(&[3 * c], self.lambda * inv);
        p
    }

    /// Iterates from `W = 0`, returning `F(W^t)` for `t = 0..=iters` and the
    /// final iterate.
    pub fn run(&self, z: &Tensor, iters: usize) -> Result<(Vec<f64>, CombinedRepresentation)> {
        let p = self.step_params();
        let c = self.dictionary.channels();
        let mut w = CombinedRepresentation::zeros(c, self.height, self.width);
        let mut hist = vec![self.objective(&w, z)?];
        for _ in 0..iters {
            w = cdblock_step_counted(&p, &w, z, &mut MulCount::default())?;
            hist.push(self.objective(&w, z)?);
        }
        Ok((hist, w))
    }
}

/// Largest eigenvalue of `DᵀD` by power iteration.
pub fn power_iteration(d: &CDBlockParams, h: usize, w: usize, iters: usize, rng: &mut impl Rng) -> Result<f64> {
    let c = d.channels();
    let mut v = Tensor::from_fn(&[3 * c, h, w], |_| rng.random_range(-1.0..1.0));
    let mut lambda = 0.0;
    for _ in 0..iters {
        let norm = v.l2_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = v.scale(1.0 / norm);
        let dv = dict_adjoint(d, &dict_forward(d, &CombinedRepresentation::new(v.clone())?)?)?;
        lambda = v.dot(&dv)?;
        v = dv;
    }
    Ok(lambda)
}
