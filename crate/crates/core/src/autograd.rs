//! Reverse-mode gradients of the training objective
//! `hlif(fuse_luminance(params, x, y), x, y)` with respect to every parameter.
//!
//! The graph is fixed, so each adjoint is written out by hand:
//! convolutions back-propagate through their transposed pair, soft
//! thresholds through their active mask, the clamp through `[0, 1]`.
//! Subgradient conventions: shrinkage has zero slope at `|v| = θ`,
//! `|·|` and `sign` have zero slope at 0, the clamp passes gradient on the
//! closed interval `[0, 1]`.

use crate::cdblock::CDBlockParams;
use crate::error::Result;
use crate::loss::{
    adaptive_weights, hlif_loss_and_grad, hlif_loss_with, scharr_magnitude, scharr_response, LossConfig,
    LossReport, ScharrAxis,
};
use crate::network::{forward_traced, ForwardTrace, ModelParams};
use crate::tensor::{
    conv2d, conv2d_counted, conv2d_into, conv2d_kernel_grad, conv2d_transposed, sign, MulCount,
    Tensor,
};

/// One gradient tensor per parameter tensor, shape-matched to [`ModelParams`].
pub type GradientSet = ModelParams;

/// Loss and exact gradients for a single source pair.
pub fn backward(
    params: &ModelParams,
    x: &Tensor,
    y: &Tensor,
    loss: &LossConfig,
) -> Result<(LossReport, GradientSet)> {
    let trace = forward_traced(params, x, y)?;
    let (report, g_f) = hlif_loss_and_grad(&trace.output, x, y, loss)?;
    let cfg = params.config();
    let c = cfg.channels;
    let mut grads = ModelParams::zeros(&cfg);

    // clamp
    let g_o = Tensor::new(
        trace.output.shape(),
        g_f.data()
            .iter()
            .zip(trace.projected.data())
            .map(|(&g, &o)| if (0.0..=1.0).contains(&o) { g } else { 0.0 })
            .collect(),
    )?;

    // head
    conv2d_kernel_grad(&trace.fused_features, &g_o, &mut grads.proj)?;
    let g_fused = conv2d_transposed(&g_o, &params.proj)?;
    conv2d_kernel_grad(&trace.mixed, &g_fused, &mut grads.d_f2)?;
    let g_mixed = conv2d_transposed(&g_fused, &params.d_f2)?;
    let w_final = trace.steps.last().expect("at least one block").output.tensor();
    conv2d_kernel_grad(w_final, &g_mixed, &mut grads.d_f1)?;
    let mut g_w = conv2d_transposed(&g_mixed, &params.d_f1)?;
    let mut g_z = g_mixed;

    // blocks, last to first
    for t in (0..params.blocks.len()).rev() {
        let w_prev = if t == 0 {
            Tensor::zeros(trace.steps[0].output.tensor().shape())
        } else {
            trace.steps[t - 1].output.tensor().clone()
        };
        let step = &trace.steps[t];
        let (gw_prev, gz) = block_backward(
            &params.blocks[t],
            &mut grads.blocks[t],
            &w_prev,
            &trace.z,
            &step.pre_threshold,
            &g_w,
        )?;
        g_w = gw_prev;
        g_z.axpy(1.0, &gz)?;
    }

    // expansion
    conv2d_kernel_grad(x, &g_z.channels(0, c)?, &mut grads.expand_x)?;
    conv2d_kernel_grad(y, &g_z.channels(c, c)?, &mut grads.expand_y)?;

    Ok((report, grads))
}

/// Back-propagates `g_out` through `W = S_θ(W_prev − d_U ⊗ᵀ (d_D ⊗ W_prev − Z))`.
/// Accumulates parameter gradients into `g` and returns `(∂/∂W_prev, ∂/∂Z)`.
fn block_backward(
    p: &CDBlockParams,
    g: &mut CDBlockParams,
    w_prev: &Tensor,
    z: &Tensor,
    pre: &Tensor,
    g_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let c = p.channels();
    let (_, h, w) = pre.chw()?;
    let plane = h * w;
    let theta = p.thresholds();

    // shrinkage
    let mut g_pre = g_out.clone();
    for (ch, &t) in theta.iter().enumerate().take(3 * c) {
        let raw_sign = sign(p.theta.data()[ch]);
        let mut g_theta = 0.0;
        for i in ch * plane..(ch + 1) * plane {
            let v = pre.data()[i];
            if v.abs() > t {
                g_theta -= g_out.data()[i] * sign(v);
            } else {
                g_pre.data_mut()[i] = 0.0;
            }
        }
        g.theta.data_mut()[ch] += g_theta * raw_sign;
    }

    // recompute the residual S = [P; Q] = d_D ⊗ W_prev − Z
    let zx = w_prev.channels(0, c)?;
    let zy = w_prev.channels(c, c)?;
    let zc = w_prev.channels(2 * c, c)?;
    let mut n = MulCount::default();
    let mut pp = conv2d_counted(&zx, &p.ux_f, &mut n)?;
    conv2d_into(&zc, &p.cx_f, &mut pp, &mut n)?;
    let pp = pp.sub(&z.channels(0, c)?)?;
    let mut qq = conv2d_counted(&zy, &p.uy_f, &mut n)?;
    conv2d_into(&zc, &p.cy_f, &mut qq, &mut n)?;
    let qq = qq.sub(&z.channels(c, c)?)?;

    // pre = W_prev − correction
    let g_corr = g_pre.scale(-1.0);
    let gx = g_corr.channels(0, c)?;
    let gy = g_corr.channels(c, c)?;
    let gc = g_corr.channels(2 * c, c)?;

    // correction = [ux_a ⊗ᵀ P ; uy_a ⊗ᵀ Q ; cx_a ⊗ᵀ P + cy_a ⊗ᵀ Q]
    conv2d_kernel_grad(&gx, &pp, &mut g.ux_a)?;
    conv2d_kernel_grad(&gy, &qq, &mut g.uy_a)?;
    conv2d_kernel_grad(&gc, &pp, &mut g.cx_a)?;
    conv2d_kernel_grad(&gc, &qq, &mut g.cy_a)?;
    let g_p = conv2d(&gx, &p.ux_a)?.add(&conv2d(&gc, &p.cx_a)?)?;
    let g_q = conv2d(&gy, &p.uy_a)?.add(&conv2d(&gc, &p.cy_a)?)?;

    // S = d_D ⊗ W_prev − Z
    conv2d_kernel_grad(&zx, &g_p, &mut g.ux_f)?;
    conv2d_kernel_grad(&zc, &g_p, &mut g.cx_f)?;
    conv2d_kernel_grad(&zy, &g_q, &mut g.uy_f)?;
    conv2d_kernel_grad(&zc, &g_q, &mut g.cy_f)?;
    let g_zx = conv2d_transposed(&g_p, &p.ux_f)?;
    let g_zy = conv2d_transposed(&g_q, &p.uy_f)?;
    let g_zc = conv2d_transposed(&g_p, &p.cx_f)?.add(&conv2d_transposed(&g_q, &p.cy_f)?)?;

    let mut g_wprev = Tensor::concat_channels(&[&g_zx, &g_zy, &g_zc])?;
    g_wprev.axpy(1.0, &g_pre)?;
    let g_z = Tensor::concat_channels(&[&g_p, &g_q])?.scale(-1.0);
    Ok((g_wprev, g_z))
}

/// Smallest distance of any branch point of the forward pass to its kink:
/// `|v| − θ` in every shrinkage, the clamp bounds, and the zero crossings of
/// the Scharr responses and l1 residual in the loss. Finite-difference
/// checks are meaningless for components whose perturbation crosses a kink.
pub fn kink_margin(params: &ModelParams, x: &Tensor, y: &Tensor, loss: &LossConfig) -> Result<f64> {
    let trace = forward_traced(params, x, y)?;
    let mut m = f64::INFINITY;
    for (b, st) in params.blocks.iter().zip(&trace.steps) {
        let theta = b.thresholds();
        let (_, h, w) = st.pre_threshold.chw()?;
        for (i, v) in st.pre_threshold.data().iter().enumerate() {
            m = m.min((v.abs() - theta[i / (h * w)]).abs());
        }
    }
    for &o in trace.projected.data() {
        m = m.min(o.abs()).min((o - 1.0).abs());
    }
    let f = &trace.output;
    let (_, h, w) = f.chw()?;
    let fh = scharr_response(f, ScharrAxis::Horizontal)?;
    let fv = scharr_response(f, ScharrAxis::Vertical)?;
    let gx = scharr_magnitude(x)?;
    let gy = scharr_magnitude(y)?;
    let wts = adaptive_weights(&gx, &gy, loss.tau)?;
    for i in 0..h * w {
        let gref = wts.zx.data()[i] * gx.data()[i] + wts.zy.data()[i] * gy.data()[i];
        let r = fh[i].abs() + fv[i].abs() - gref;
        // responses that are exactly zero sit in flat (often clamped) regions and
        // stay zero under perturbation; only count genuine crossings
        if fh[i] != 0.0 {
            m = m.min(fh[i].abs());
        }
        if fv[i] != 0.0 {
            m = m.min(fv[i].abs());
        }
        m = m.min(r.abs());
    }
    Ok(m)
}

/// Which side of every kink the forward pass sits on. Two parameter
/// settings with equal patterns lie in the same smooth piece of the loss.
pub fn activation_pattern(params: &ModelParams, x: &Tensor, y: &Tensor, loss: &LossConfig) -> Result<Vec<i8>> {
    let trace = forward_traced(params, x, y)?;
    pattern_of(params, &trace, x, y, loss)
}

/// Loss value and [`activation_pattern`] from a single forward pass.
pub fn loss_and_pattern(
    params: &ModelParams,
    x: &Tensor,
    y: &Tensor,
    loss: &LossConfig,
) -> Result<(f64, Vec<i8>)> {
    let trace = forward_traced(params, x, y)?;
    let total = hlif_loss_with(&trace.output, x, y, loss)?.total;
    Ok((total, pattern_of(params, &trace, x, y, loss)?))
}

fn pattern_of(params: &ModelParams, trace: &ForwardTrace, x: &Tensor, y: &Tensor, loss: &LossConfig) -> Result<Vec<i8>> {
    let mut pat = Vec::new();
    for (b, st) in params.blocks.iter().zip(&trace.steps) {
        let theta = b.thresholds();
        let (_, h, w) = st.pre_threshold.chw()?;
        for (i, &v) in st.pre_threshold.data().iter().enumerate() {
            let t = theta[i / (h * w)];
            pat.push(if v > t { 1 } else if v < -t { -1 } else { 0 });
        }
    }
    for &o in trace.projected.data() {
        pat.push(if o < 0.0 { -1 } else if o > 1.0 { 1 } else { 0 });
    }
    let f = &trace.output;
    let fh = scharr_response(f, ScharrAxis::Horizontal)?;
    let fv = scharr_response(f, ScharrAxis::Vertical)?;
    let gx = scharr_magnitude(x)?;
    let gy = scharr_magnitude(y)?;
    let wts = adaptive_weights(&gx, &gy, loss.tau)?;
    for i in 0..f.len() {
        let gref = wts.zx.data()[i] * gx.data()[i] + wts.zy.data()[i] * gy.data()[i];
        pat.push(sign(fh[i]) as i8);
        pat.push(sign(fv[i]) as i8);
        pat.push(sign(fh[i].abs() + fv[i].abs() - gref) as i8);
    }
    Ok(pat)
}
