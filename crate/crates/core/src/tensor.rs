//! Dense row-major `f64` tensors and the same-padded convolution pair.
//!
//! Images are stored channel-major (`C × H × W`), convolution kernels as
//! `Cout × Cin × k × k`. Convolution follows the cross-correlation
//! convention (no kernel flip); [`conv2d_transposed`] is its exact adjoint.

use crate::error::{Error, Result};

/// Dense tensor of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Panics on an invalid shape; intended for shapes fixed by construction.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        check_shape(shape).expect("invalid tensor shape");
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        check_shape(shape).expect("invalid tensor shape");
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::dim(format!("expected rank-3 tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn abs(&self) -> Tensor {
        self.map(f64::abs)
    }

    /// Sign with `sign(0) = 0`.
    pub fn sign(&self) -> Tensor {
        self.map(sign)
    }

    pub fn max0(&self) -> Tensor {
        self.map(|v| v.max(0.0))
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn l1_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Channels `start..start+count` of a rank-3 tensor.
    pub fn channels(&self, start: usize, count: usize) -> Result<Tensor> {
        let (c, h, w) = self.chw()?;
        if start + count > c || count == 0 {
            return Err(Error::dim(format!(
                "channel range {start}..{} out of bounds for {c} channels",
                start + count
            )));
        }
        let plane = h * w;
        Ok(Tensor {
            shape: vec![count, h, w],
            data: self.data[start * plane..(start + count) * plane].to_vec(),
        })
    }

    /// Stacks rank-3 tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::dim("nothing to concatenate"))?;
        let (_, h, w) = first.chw()?;
        let mut total = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.chw()?;
            if (ph, pw) != (h, w) {
                return Err(Error::dim(format!(
                    "spatial mismatch in concat: {h}x{w} vs {ph}x{pw}"
                )));
            }
            total += c;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape: vec![total, h, w], data })
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::dim(format!("rank must be 1..=4, got {}", shape.len())));
    }
    if shape.contains(&0) {
        return Err(Error::dim(format!("zero extent in shape {shape:?}")));
    }
    Ok(())
}

pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Running count of scalar multiplications spent in kernel applications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct MulCount(pub u64);

impl MulCount {
    fn add_conv(&mut self, cout: usize, cin: usize, k: usize, h: usize, w: usize) {
        self.0 += (cout * cin * k * k * h * w) as u64;
    }
}

struct ConvGeom {
    cout: usize,
    cin: usize,
    k: usize,
    h: usize,
    w: usize,
}

fn kernel_geom(kernel: &Tensor) -> Result<(usize, usize, usize)> {
    match kernel.shape[..] {
        [cout, cin, kh, kw] => {
            if kh != kw || kh % 2 == 0 {
                return Err(Error::dim(format!(
                    "kernel must be square with odd size, got {kh}x{kw}"
                )));
            }
            Ok((cout, cin, kh))
        }
        _ => Err(Error::dim(format!("expected rank-4 kernel, got shape {:?}", kernel.shape))),
    }
}

/// Valid destination range `[lo, hi)` along one axis for tap offset `d`
/// (source index = dest index + d), given extent `n`.
#[inline]
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

fn forward_geom(input: &Tensor, kernel: &Tensor) -> Result<ConvGeom> {
    let (cin, h, w) = input.chw()?;
    let (cout, kcin, k) = kernel_geom(kernel)?;
    if kcin != cin {
        return Err(Error::dim(format!(
            "kernel expects {kcin} input channels, input has {cin}"
        )));
    }
    Ok(ConvGeom { cout, cin, k, h, w })
}

/// Same-padded 2-D cross-correlation:
/// `out[o,i,j] = Σ kernel[o,c,u,v] · input[c, i+u-p, j+v-p]` with zeros outside.
pub fn conv2d(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    conv2d_counted(input, kernel, &mut MulCount::default())
}

pub fn conv2d_counted(input: &Tensor, kernel: &Tensor, count: &mut MulCount) -> Result<Tensor> {
    let g = forward_geom(input, kernel)?;
    let mut out = Tensor::zeros(&[g.cout, g.h, g.w]);
    conv2d_accumulate(input, kernel, &g, &mut out.data);
    count.add_conv(g.cout, g.cin, g.k, g.h, g.w);
    Ok(out)
}

/// `out += conv2d(input, kernel)`; `out` must be `Cout × H × W`.
pub fn conv2d_into(input: &Tensor, kernel: &Tensor, out: &mut Tensor, count: &mut MulCount) -> Result<()> {
    let g = forward_geom(input, kernel)?;
    if out.shape != [g.cout, g.h, g.w] {
        return Err(Error::dim(format!(
            "conv output buffer has shape {:?}, expected {:?}",
            out.shape,
            [g.cout, g.h, g.w]
        )));
    }
    conv2d_accumulate(input, kernel, &g, &mut out.data);
    count.add_conv(g.cout, g.cin, g.k, g.h, g.w);
    Ok(())
}

fn conv2d_accumulate(input: &Tensor, kernel: &Tensor, g: &ConvGeom, out: &mut [f64]) {
    let p = (g.k / 2) as isize;
    let kk = g.k * g.k;
    shifted_accumulate(&input.data, g.cin, out, g.cout, g.h, g.w, g.k, |o, c, u, v| {
        (kernel.data[(o * g.cin + c) * kk + u * g.k + v], u as isize - p, v as isize - p)
    });
}

/// `out[o, i, j] += wt · input[c, i + du, j + dv]` over all taps, where
/// `tap(o, c, u, v)` yields `(wt, du, dv)`. Rows are the outer loop so one
/// output row stays in cache while every channel and tap is accumulated into
/// it; per element the terms are added in `(c, u, v)` order.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn shifted_accumulate(
    input: &[f64],
    in_ch: usize,
    out: &mut [f64],
    out_ch: usize,
    h: usize,
    w: usize,
    k: usize,
    tap: impl Fn(usize, usize, usize, usize) -> (f64, isize, isize),
) {
    let plane = h * w;
    for o in 0..out_ch {
        for i in 0..h {
            let dst_row = &mut out[o * plane + i * w..o * plane + (i + 1) * w];
            for c in 0..in_ch {
                let in_plane = &input[c * plane..(c + 1) * plane];
                if k == 3 && i >= 1 && i + 1 < h && w >= 3 {
                    let mut taps = [(0.0, 0isize, 0isize); 9];
                    for (t, slot) in taps.iter_mut().enumerate() {
                        *slot = tap(o, c, t / 3, t % 3);
                    }
                    accumulate_3x3_row(in_plane, w, i, &taps, dst_row);
                    continue;
                }
                for u in 0..k {
                    for v in 0..k {
                        let (wt, du, dv) = tap(o, c, u, v);
                        if wt == 0.0 {
                            continue;
                        }
                        let si = i as isize + du;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        let (j0, j1) = tap_range(dv, w);
                        if j0 >= j1 {
                            continue;
                        }
                        let start = si as usize * w;
                        let src = &in_plane[(start as isize + j0 as isize + dv) as usize
                            ..(start as isize + j1 as isize + dv) as usize];
                        for (d, s) in dst_row[j0..j1].iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
        }
    }
}

/// Nine-tap update of one output row away from the top and bottom borders
/// (`|du|, |dv| ≤ 1`). The accumulator stays in a register across taps.
#[inline(always)]
fn accumulate_3x3_row(in_plane: &[f64], w: usize, i: usize, taps: &[(f64, isize, isize); 9], dst: &mut [f64]) {
    let n = w - 2;
    let src: [&[f64]; 9] = std::array::from_fn(|t| {
        let (_, du, dv) = taps[t];
        let start = (i as isize + du) as usize * w + (1 + dv) as usize;
        &in_plane[start..start + n]
    });
    let wt: [f64; 9] = std::array::from_fn(|t| taps[t].0);
    let inner = &mut dst[1..1 + n];
    let [s0, s1, s2, s3, s4, s5, s6, s7, s8] = src;
    let (s0, s1, s2, s3, s4, s5, s6, s7, s8) =
        (&s0[..n], &s1[..n], &s2[..n], &s3[..n], &s4[..n], &s5[..n], &s6[..n], &s7[..n], &s8[..n]);
    for j in 0..n {
        let mut acc = inner[j];
        acc += wt[0] * s0[j];
        acc += wt[1] * s1[j];
        acc += wt[2] * s2[j];
        acc += wt[3] * s3[j];
        acc += wt[4] * s4[j];
        acc += wt[5] * s5[j];
        acc += wt[6] * s6[j];
        acc += wt[7] * s7[j];
        acc += wt[8] * s8[j];
        inner[j] = acc;
    }
    for j in [0, w - 1] {
        let mut acc = dst[j];
        for &(wt, du, dv) in taps {
            let sj = j as isize + dv;
            if sj >= 0 && sj < w as isize {
                acc += wt * in_plane[(i as isize + du) as usize * w + sj as usize];
            }
        }
        dst[j] = acc;
    }
}

/// Adjoint of [`conv2d`] with the same kernel: maps `Cout × H × W` to
/// `Cin × H × W` such that `⟨conv2d(a,K), b⟩ = ⟨a, conv2d_transposed(b,K)⟩`.
pub fn conv2d_transposed(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    conv2d_transposed_counted(input, kernel, &mut MulCount::default())
}

pub fn conv2d_transposed_counted(
    input: &Tensor,
    kernel: &Tensor,
    count: &mut MulCount,
) -> Result<Tensor> {
    let (_, cin, _) = kernel_geom(kernel)?;
    let (_, h, w) = input.chw()?;
    let mut out = Tensor::zeros(&[cin, h, w]);
    conv2d_transposed_into(input, kernel, &mut out, count)?;
    Ok(out)
}

/// `out += conv2d_transposed(input, kernel)`.
pub fn conv2d_transposed_into(
    input: &Tensor,
    kernel: &Tensor,
    out: &mut Tensor,
    count: &mut MulCount,
) -> Result<()> {
    let (cout, cin, k) = kernel_geom(kernel)?;
    let (ic, h, w) = input.chw()?;
    if ic != cout {
        return Err(Error::dim(format!(
            "transposed conv expects {cout} input channels, input has {ic}"
        )));
    }
    if out.shape != [cin, h, w] {
        return Err(Error::dim(format!(
            "transposed conv output buffer has shape {:?}, expected {:?}",
            out.shape,
            [cin, h, w]
        )));
    }
    let p = (k / 2) as isize;
    let kk = k * k;
    // out[c] gathers in[o] shifted by -(u - p), -(v - p)
    shifted_accumulate(&input.data, cout, &mut out.data, cin, h, w, k, |c, o, u, v| {
        (kernel.data[(o * cin + c) * kk + u * k + v], p - u as isize, p - v as isize)
    });
    count.add_conv(cout, cin, k, h, w);
    Ok(())
}

/// Gradient of `⟨conv2d(input, K), grad_out⟩` with respect to `K`, accumulated
/// into `grad_kernel` (shape `Cout × Cin × k × k`).
///
/// Because [`conv2d_transposed`] is the adjoint, the kernel gradient of
/// `⟨b, conv2d_transposed(a, K)⟩` is `conv2d_kernel_grad(b, a, ..)`.
pub fn conv2d_kernel_grad(input: &Tensor, grad_out: &Tensor, grad_kernel: &mut Tensor) -> Result<()> {
    let g = forward_geom(input, grad_kernel)?;
    if grad_out.shape != [g.cout, g.h, g.w] {
        return Err(Error::dim(format!(
            "output gradient has shape {:?}, expected {:?}",
            grad_out.shape,
            [g.cout, g.h, g.w]
        )));
    }
    let (h, w, k) = (g.h, g.w, g.k);
    let p = (k / 2) as isize;
    let plane = h * w;
    for o in 0..g.cout {
        let go = &grad_out.data[o * plane..(o + 1) * plane];
        for c in 0..g.cin {
            let inp = &input.data[c * plane..(c + 1) * plane];
            let base = (o * g.cin + c) * k * k;
            for u in 0..k {
                let du = u as isize - p;
                let (i0, i1) = tap_range(du, h);
                for v in 0..k {
                    let dv = v as isize - p;
                    let (j0, j1) = tap_range(dv, w);
                    if j0 >= j1 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for i in i0..i1 {
                        let src_row = (i as isize + du) as usize * w;
                        let src = &inp[(src_row as isize + j0 as isize + dv) as usize
                            ..(src_row as isize + j1 as isize + dv) as usize];
                        let gr = &go[i * w + j0..i * w + j1];
                        acc += gr.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad_kernel.data[base + u * k + v] += acc;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct nested-loop evaluation of the convolution definition.
    fn conv_reference(input: &Tensor, kernel: &Tensor) -> Tensor {
        let [cin, h, w] = input.shape()[..] else { panic!() };
        let [cout, _, k, _] = kernel.shape()[..] else { panic!() };
        let p = (k / 2) as isize;
        let x = |c: usize, i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
                0.0
            } else {
                input.data()[(c * h + i as usize) * w + j as usize]
            }
        };
        Tensor::from_fn(&[cout, h, w], |idx| {
            let o = idx / (h * w);
            let i = (idx / w) % h;
            let j = idx % w;
            let mut s = 0.0;
            for c in 0..cin {
                for u in 0..k {
                    for v in 0..k {
                        s += kernel.data()[((o * cin + c) * k + u) * k + v]
                            * x(c, i as isize + u as isize - p, j as isize + v as isize - p);
                    }
                }
            }
            s
        })
    }

    /// Direct evaluation of the adjoint: every input tap scattered back.
    fn transposed_reference(input: &Tensor, kernel: &Tensor) -> Tensor {
        let [cout, h, w] = input.shape()[..] else { panic!() };
        let [_, cin, k, _] = kernel.shape()[..] else { panic!() };
        let p = k / 2;
        let mut out = Tensor::zeros(&[cin, h, w]);
        for o in 0..cout {
            for c in 0..cin {
                for i in 0..h {
                    for j in 0..w {
                        for u in 0..k {
                            for v in 0..k {
                                let (si, sj) = (i + u, j + v);
                                if si < p || sj < p || si - p >= h || sj - p >= w {
                                    continue;
                                }
                                out.data_mut()[(c * h + si - p) * w + sj - p] += kernel.data()
                                    [((o * cin + c) * k + u) * k + v]
                                    * input.data()[(o * h + i) * w + j];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_scaling_identity() {
        let x = Tensor::filled(&[1, 3, 3], 1.0);
        let k = Tensor::filled(&[1, 1, 1, 1], 2.0);
        assert_eq!(conv2d(&x, &k).unwrap(), Tensor::filled(&[1, 3, 3], 2.0));
    }

    #[test]
    fn conv_zero_kernel_annihilates() {
        let x = Tensor::new(&[1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let k = Tensor::zeros(&[1, 1, 3, 3]);
        assert_eq!(conv2d(&x, &k).unwrap(), Tensor::zeros(&[1, 3, 3]));
    }

    #[test]
    fn conv_matches_nested_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let got = conv2d(&x, &k).unwrap();
        let want = conv_reference(&x, &k);
        assert!(got.max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &k), Err(Error::Dimension(_))));
        let y = Tensor::zeros(&[2, 4, 4]);
        assert!(matches!(conv2d_transposed(&y, &k), Err(Error::Dimension(_))));
    }

    #[test]
    fn transposed_scalar_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[1, 4, 4], &mut rng);
        let k = Tensor::filled(&[1, 1, 1, 1], -3.0);
        assert_eq!(conv2d_transposed(&x, &k).unwrap(), x.scale(-3.0));
    }

    #[test]
    fn transposed_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&[2, 4, 4], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3, 4, 4], &mut rng);
        let lhs = conv2d(&a, &k).unwrap().dot(&b).unwrap();
        let rhs = a.dot(&conv2d_transposed(&b, &k).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn transposed_delta_stamps_flipped_kernel() {
        let mut d = Tensor::zeros(&[1, 3, 3]);
        d.data_mut()[4] = 1.0;
        let k = Tensor::new(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let fwd = conv2d(&d, &k).unwrap();
        let adj = conv2d_transposed(&d, &k).unwrap();
        // cross-correlation stamps the kernel flipped; the adjoint stamps it upright
        assert_eq!(fwd.data(), &[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(adj.data(), k.data());
    }

    #[test]
    fn one_by_one_conv_is_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[4, 1, 1], &mut rng);
        let k = random(&[3, 4, 1, 1], &mut rng);
        let y = conv2d(&x, &k).unwrap();
        for o in 0..3 {
            let mut s = 0.0;
            for c in 0..4 {
                s += k.data()[o * 4 + c] * x.data()[c];
            }
            assert_eq!(y.data()[o], s);
        }
    }

    #[test]
    fn kernel_grad_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[2, 5, 4], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let g = random(&[3, 5, 4], &mut rng);
        let mut grad = Tensor::zeros(k.shape());
        conv2d_kernel_grad(&x, &g, &mut grad).unwrap();
        // the objective is linear in K, so a unit perturbation is exact
        for idx in 0..k.len() {
            let mut kp = k.clone();
            kp.data_mut()[idx] += 1.0;
            let diff = conv2d(&x, &kp).unwrap().dot(&g).unwrap() - conv2d(&x, &k).unwrap().dot(&g).unwrap();
            assert!((diff - grad.data()[idx]).abs() < 1e-10);
        }
    }

    #[test]
    fn mul_count_follows_tap_convention() {
        let mut n = MulCount::default();
        conv2d_counted(&Tensor::zeros(&[2, 7, 5]), &Tensor::zeros(&[3, 2, 3, 3]), &mut n).unwrap();
        assert_eq!(n.0, 3 * 2 * 9 * 35);
    }

    #[test]
    fn elementwise_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        let x = Tensor::new(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(x.l1_sum(), 6.0);
        assert_eq!(x.hadamard(&Tensor::filled(&[3], 1.0)).unwrap(), x);
        assert_eq!(x.sign().data(), &[1.0, -1.0, 1.0]);
        assert_eq!(x.max0().data(), &[1.0, 0.0, 3.0]);
        assert!((x.l2_norm() - 14f64.sqrt()).abs() < 1e-15);
        assert!((x.mean() - 2.0 / 3.0).abs() < 1e-15);
        assert!(x.add(&Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn matches_references(cin in 1usize..4, cout in 1usize..4, k in prop::sample::select(vec![1usize, 3, 5]),
                                  h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random(&[cin, h, w], &mut rng);
                let b = random(&[cout, h, w], &mut rng);
                let kern = random(&[cout, cin, k, k], &mut rng);
                prop_assert!(conv2d(&a, &kern).unwrap().max_abs_diff(&conv_reference(&a, &kern)).unwrap() <= 1e-12);
                let t = conv2d_transposed(&b, &kern).unwrap();
                prop_assert!(t.max_abs_diff(&transposed_reference(&b, &kern)).unwrap() <= 1e-12);
            }

            #[test]
            fn adjointness(cin in 1usize..4, cout in 1usize..4, k in prop::sample::select(vec![1usize, 3, 5]),
                           h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random(&[cin, h, w], &mut rng);
                let b = random(&[cout, h, w], &mut rng);
                let kern = random(&[cout, cin, k, k], &mut rng);
                let lhs = conv2d(&a, &kern).unwrap().dot(&b).unwrap();
                let rhs = a.dot(&conv2d_transposed(&b, &kern).unwrap()).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
            }
        }
    }
}
