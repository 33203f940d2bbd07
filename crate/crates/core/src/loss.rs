//! High- and low-frequency image fidelity loss.
//!
//! Source gradient magnitudes are mapped through a sigmoid, normalized into
//! complementary importance maps `Zx + Zy = 1`, and used to build a gradient
//! reference (l1 term) and a luminance reference (l2 term) for the fused
//! image.

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, sign, Tensor};

/// Scharr smoothing weights across the derivative direction; the derivative
/// itself is the central difference `left − right` (or `up − down`).
const SCHARR_TAPS: [f64; 3] = [3.0 / 16.0, 10.0 / 16.0, 3.0 / 16.0];

/// Direction of a Scharr derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScharrAxis {
    /// Kernel `[3, 0, −3; 10, 0, −10; 3, 0, −3] / 16`.
    Horizontal,
    /// Transpose of the horizontal kernel.
    Vertical,
}

pub const DEFAULT_TAU: f64 = 0.1;

/// How the two norms are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `‖·‖₁ / (H·W)` and `‖·‖₂ / √(H·W)`: resolution independent.
    #[default]
    PerPixel,
    /// Plain `‖·‖₁` and `‖·‖₂`.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
    /// Weight of the high-frequency term (1 in the standard loss; 0 gives a
    /// luminance-only ablation).
    pub hif_weight: f64,
    /// `λ` on the low-frequency term.
    pub lif_weight: f64,
    pub normalization: Normalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { tau: DEFAULT_TAU, hif_weight: 1.0, lif_weight: 1.0, normalization: Normalization::PerPixel }
    }
}

impl LossConfig {
    pub fn with_tau(tau: f64) -> Self {
        LossConfig { tau, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveWeights {
    pub zx: Tensor,
    pub zy: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub hif: f64,
    pub lif: f64,
    pub total: f64,
    pub weights: AdaptiveWeights,
}

fn plane(img: &Tensor) -> Result<(usize, usize)> {
    match img.chw()? {
        (1, h, w) => Ok((h, w)),
        (c, _, _) => Err(Error::dim(format!("expected a single-channel image, got {c} channels"))),
    }
}

/// Positions `(plus, minus)` of tap `t` at pixel `(i, j)`, borders replicated.
#[inline]
fn scharr_taps(i: usize, j: usize, t: usize, h: usize, w: usize, axis: ScharrAxis) -> (usize, usize) {
    let clampi = |v: usize| v.saturating_sub(1).min(h - 1);
    let clampj = |v: usize| v.saturating_sub(1).min(w - 1);
    match axis {
        ScharrAxis::Horizontal => {
            let r = clampi(i + t);
            (r * w + clampj(j), r * w + clampj(j + 2))
        }
        ScharrAxis::Vertical => {
            let c = clampj(j + t);
            (clampi(i) * w + c, clampi(i + 2) * w + c)
        }
    }
}

/// Scharr response with replicated borders. Written as weighted differences
/// so flat regions give exactly zero.
fn scharr(img: &[f64], h: usize, w: usize, axis: ScharrAxis) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut s = 0.0;
            for (t, &k) in SCHARR_TAPS.iter().enumerate() {
                let (a, b) = scharr_taps(i, j, t, h, w, axis);
                s += k * (img[a] - img[b]);
            }
            out[i * w + j] = s;
        }
    }
    out
}

/// Adjoint of [`scharr`], accumulated into `out`.
fn scharr_adjoint(g: &[f64], h: usize, w: usize, axis: ScharrAxis, out: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let gij = g[i * w + j];
            if gij == 0.0 {
                continue;
            }
            for (t, &k) in SCHARR_TAPS.iter().enumerate() {
                let (a, b) = scharr_taps(i, j, t, h, w, axis);
                out[a] += k * gij;
                out[b] -= k * gij;
            }
        }
    }
}

/// Signed Scharr response of a single-channel image.
pub fn scharr_response(img: &Tensor, axis: ScharrAxis) -> Result<Vec<f64>> {
    let (h, w) = plane(img)?;
    Ok(scharr(img.data(), h, w, axis))
}

/// `|G_h| + |G_v|` with the Scharr pair; borders are replicated so constant
/// images have zero gradient everywhere.
pub fn scharr_magnitude(img: &Tensor) -> Result<Tensor> {
    let (h, w) = plane(img)?;
    let gh = scharr(img.data(), h, w, ScharrAxis::Horizontal);
    let gv = scharr(img.data(), h, w, ScharrAxis::Vertical);
    Tensor::new(&[1, h, w], gh.iter().zip(&gv).map(|(a, b)| a.abs() + b.abs()).collect())
}

/// `Zx = σ(gx/τ) / (σ(gx/τ) + σ(gy/τ))`, `Zy = 1 − Zx`.
pub fn adaptive_weights(grad_x: &Tensor, grad_y: &Tensor, tau: f64) -> Result<AdaptiveWeights> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Parameter(format!("tau must be positive and finite, got {tau}")));
    }
    grad_x.same_shape(grad_y)?;
    let mut zx = grad_x.clone();
    let mut zy = grad_y.clone();
    for (a, b) in zx.data_mut().iter_mut().zip(zy.data_mut()) {
        let wx = sigmoid(*a / tau);
        let wy = sigmoid(*b / tau);
        // divide out the smaller weight so swapping sources mirrors the
        // arithmetic; the double complement makes the pair sum to exactly one
        // (one of the two subtractions is exact by Sterbenz)
        if wx <= wy {
            let zx = wx / (wx + wy);
            *b = 1.0 - zx;
            *a = 1.0 - *b;
        } else {
            let zy = wy / (wx + wy);
            *a = 1.0 - zy;
            *b = 1.0 - *a;
        }
    }
    Ok(AdaptiveWeights { zx, zy })
}

fn reference(weights: &AdaptiveWeights, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    weights.zx.hadamard(a)?.add(&weights.zy.hadamard(b)?)
}

fn norm_scale(n: usize, norm: Normalization) -> (f64, f64) {
    match norm {
        Normalization::PerPixel => (1.0 / n as f64, 1.0 / (n as f64).sqrt()),
        Normalization::Raw => (1.0, 1.0),
    }
}

/// Mean absolute deviation of `∇f` from the weighted source gradients.
pub fn hif_loss(f: &Tensor, x: &Tensor, y: &Tensor, weights: &AdaptiveWeights) -> Result<f64> {
    hif_loss_with(f, x, y, weights, Normalization::PerPixel)
}

pub fn hif_loss_with(
    f: &Tensor,
    x: &Tensor,
    y: &Tensor,
    weights: &AdaptiveWeights,
    norm: Normalization,
) -> Result<f64> {
    f.same_shape(x)?;
    f.same_shape(y)?;
    let gref = reference(weights, &scharr_magnitude(x)?, &scharr_magnitude(y)?)?;
    let r = scharr_magnitude(f)?.sub(&gref)?;
    Ok(r.l1_sum() * norm_scale(f.len(), norm).0)
}

/// Root-mean-square deviation of `f` from the weighted sources.
pub fn lif_loss(f: &Tensor, x: &Tensor, y: &Tensor, weights: &AdaptiveWeights) -> Result<f64> {
    lif_loss_with(f, x, y, weights, Normalization::PerPixel)
}

pub fn lif_loss_with(
    f: &Tensor,
    x: &Tensor,
    y: &Tensor,
    weights: &AdaptiveWeights,
    norm: Normalization,
) -> Result<f64> {
    f.same_shape(x)?;
    f.same_shape(y)?;
    let e = f.sub(&reference(weights, x, y)?)?;
    Ok(e.l2_norm() * norm_scale(f.len(), norm).1)
}

/// Standard loss: per-pixel normalization, `λ = 1`.
pub fn hlif_loss(f: &Tensor, x: &Tensor, y: &Tensor, tau: f64) -> Result<LossReport> {
    hlif_loss_with(f, x, y, &LossConfig::with_tau(tau))
}

pub fn hlif_loss_with(f: &Tensor, x: &Tensor, y: &Tensor, cfg: &LossConfig) -> Result<LossReport> {
    Ok(hlif_loss_and_grad(f, x, y, cfg)?.0)
}

/// Loss value together with its (sub)gradient with respect to `f`.
///
/// Conventions: `d|t|/dt = 0` at `t = 0`; the l2 term has zero gradient when
/// its residual vanishes.
pub fn hlif_loss_and_grad(f: &Tensor, x: &Tensor, y: &Tensor, cfg: &LossConfig) -> Result<(LossReport, Tensor)> {
    let (h, w) = plane(f)?;
    f.same_shape(x)?;
    f.same_shape(y)?;
    let gx = scharr_magnitude(x)?;
    let gy = scharr_magnitude(y)?;
    let weights = adaptive_weights(&gx, &gy, cfg.tau)?;
    let (s1, s2) = norm_scale(h * w, cfg.normalization);

    let fh = scharr(f.data(), h, w, ScharrAxis::Horizontal);
    let fv = scharr(f.data(), h, w, ScharrAxis::Vertical);
    let gref = reference(&weights, &gx, &gy)?;
    let mut hif = 0.0;
    let mut dh = vec![0.0; h * w];
    let mut dv = vec![0.0; h * w];
    for i in 0..h * w {
        let r = fh[i].abs() + fv[i].abs() - gref.data()[i];
        hif += r.abs();
        let sr = sign(r) * s1 * cfg.hif_weight;
        dh[i] = sr * sign(fh[i]);
        dv[i] = sr * sign(fv[i]);
    }
    hif *= s1;

    let lref = reference(&weights, x, y)?;
    let e = f.sub(&lref)?;
    let enorm = e.l2_norm();
    let lif = enorm * s2;

    let mut grad = vec![0.0; h * w];
    scharr_adjoint(&dh, h, w, ScharrAxis::Horizontal, &mut grad);
    scharr_adjoint(&dv, h, w, ScharrAxis::Vertical, &mut grad);
    if enorm > 0.0 {
        let c = cfg.lif_weight * s2 / enorm;
        for (g, ei) in grad.iter_mut().zip(e.data()) {
            *g += c * ei;
        }
    }
    let total = cfg.hif_weight * hif + cfg.lif_weight * lif;
    Ok((LossReport { hif, lif, total, weights }, Tensor::new(&[1, h, w], grad)?))
}
