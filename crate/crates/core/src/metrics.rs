//! Fusion-quality metrics on single-plane images in `[0, 1]`.
//!
//! Every metric compares the fused image against both sources and averages
//! the two scores. MSE and PSNR use the 8-bit range (values are scaled by
//! 255 internally). SSIM uses an 11×11 Gaussian window (σ = 1.5) over valid
//! positions; images smaller than the window use the largest odd window that
//! fits. Nabf constants are pinned in [`NabfConstants`].

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    /// `f64::INFINITY` when the fused image matches both sources exactly.
    pub psnr: f64,
    pub ssim: f64,
    pub cc: f64,
    pub nabf: f64,
}

fn plane(t: &Tensor) -> Result<(usize, usize)> {
    let (c, h, w) = t.chw()?;
    if c != 1 {
        return Err(Error::dim(format!("metrics expect one plane, got {c}")));
    }
    Ok((h, w))
}

fn check3(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    f.same_shape(a)?;
    f.same_shape(b)?;
    plane(f)
}

fn mse_one(f: &Tensor, s: &Tensor) -> f64 {
    let n = f.len() as f64;
    f.data().iter().zip(s.data()).map(|(p, q)| ((p - q) * PEAK).powi(2)).sum::<f64>() / n
}

/// MSE of `f` against each source, on the 0–255 scale.
pub fn mse_per_source(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<[f64; 2]> {
    check3(f, a, b)?;
    Ok([mse_one(f, a), mse_one(f, b)])
}

pub fn mse(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<f64> {
    let [ma, mb] = mse_per_source(f, a, b)?;
    Ok(0.5 * (ma + mb))
}

/// `10·log10(255²/mse)`; infinite for `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Mean of the finite per-source PSNRs; infinite only if both are.
pub fn psnr(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<f64> {
    let [pa, pb] = mse_per_source(f, a, b)?.map(psnr_from_mse);
    Ok(match (pa.is_finite(), pb.is_finite()) {
        (true, true) => 0.5 * (pa + pb),
        (true, false) => pa,
        (false, true) => pb,
        (false, false) => f64::INFINITY,
    })
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid filtering of an `h × w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, g: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..k).map(|t| g[t] * src[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| g[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    (out, oh, ow)
}

fn ssim_one(f: &Tensor, s: &Tensor, h: usize, w: usize) -> f64 {
    let mut size = 11.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let g = gaussian_window(size, 1.5);
    let x: Vec<f64> = f.data().iter().map(|v| v * PEAK).collect();
    let y: Vec<f64> = s.data().iter().map(|v| v * PEAK).collect();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(a, b)| a * b).collect() };
    let (mx, ..) = filter_valid(&x, h, w, &g);
    let (my, ..) = filter_valid(&y, h, w, &g);
    let (mxx, ..) = filter_valid(&prod(&x, &x), h, w, &g);
    let (myy, ..) = filter_valid(&prod(&y, &y), h, w, &g);
    let (mxy, ..) = filter_valid(&prod(&x, &y), h, w, &g);
    let c1 = (0.01 * PEAK).powi(2);
    let c2 = (0.03 * PEAK).powi(2);
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / n as f64
}

pub fn ssim(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<f64> {
    let (h, w) = check3(f, a, b)?;
    Ok(0.5 * (ssim_one(f, a, h, w) + ssim_one(f, b, h, w)))
}

fn pearson(p: &[f64], q: &[f64]) -> f64 {
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(p) || constant(q) {
        return 0.0;
    }
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mq = q.iter().sum::<f64>() / n;
    let (mut spq, mut spp, mut sqq) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(q) {
        let (da, db) = (a - mp, b - mq);
        spq += da * db;
        spp += da * da;
        sqq += db * db;
    }
    if spp == 0.0 || sqq == 0.0 {
        return 0.0;
    }
    (spq / (spp.sqrt() * sqq.sqrt())).clamp(-1.0, 1.0)
}

/// Mean Pearson correlation against the sources; a constant image
/// correlates 0 with anything.
pub fn cc(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<f64> {
    check3(f, a, b)?;
    Ok(0.5 * (pearson(f.data(), a.data()) + pearson(f.data(), b.data())))
}

/// Constants of the edge-preservation model behind Nabf.
///
/// Strength preservation `Q_g = gamma_g / (1 + exp(kappa_g (G − sigma_g)))`,
/// orientation preservation `Q_α = gamma_a / (1 + exp(kappa_a (A − sigma_a)))`,
/// edge weight `w = g^weight_exp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NabfConstants {
    pub gamma_g: f64,
    pub kappa_g: f64,
    pub sigma_g: f64,
    pub gamma_a: f64,
    pub kappa_a: f64,
    pub sigma_a: f64,
    pub weight_exp: f64,
}

impl Default for NabfConstants {
    fn default() -> Self {
        NabfConstants {
            gamma_g: 0.9994,
            kappa_g: -15.0,
            sigma_g: 0.5,
            gamma_a: 0.9879,
            kappa_a: -22.0,
            sigma_a: 0.8,
            weight_exp: 1.0,
        }
    }
}

/// Sobel strength and orientation with replicated borders.
fn sobel(img: &Tensor, h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let d = img.data();
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, h as isize - 1) as usize;
        let j = j.clamp(0, w as isize - 1) as usize;
        d[i * w + j]
    };
    let mut g = vec![0.0; h * w];
    let mut a = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let sx = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            let sy = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
            let k = i as usize * w + j as usize;
            g[k] = (sx * sx + sy * sy).sqrt();
            a[k] = if sx == 0.0 {
                if sy == 0.0 { 0.0 } else { FRAC_PI_2 }
            } else {
                (sy / sx).atan()
            };
        }
    }
    (g, a)
}

fn preservation(gs: f64, as_: f64, gf: f64, af: f64, k: &NabfConstants) -> f64 {
    let rel_g = if gs == gf {
        1.0
    } else if gs > gf {
        gf / gs
    } else {
        gs / gf
    };
    let rel_a = 1.0 - (as_ - af).abs() / FRAC_PI_2;
    let qg = k.gamma_g / (1.0 + (k.kappa_g * (rel_g - k.sigma_g)).exp());
    let qa = k.gamma_a / (1.0 + (k.kappa_a * (rel_a - k.sigma_a)).exp());
    qg * qa
}

pub fn nabf_with(f: &Tensor, a: &Tensor, b: &Tensor, k: &NabfConstants) -> Result<f64> {
    let (h, w) = check3(f, a, b)?;
    let (ga, aa) = sobel(a, h, w);
    let (gb, ab) = sobel(b, h, w);
    let (gf, af) = sobel(f, h, w);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..h * w {
        let wa = ga[i].powf(k.weight_exp);
        let wb = gb[i].powf(k.weight_exp);
        den += wa + wb;
        if gf[i] > ga[i] && gf[i] > gb[i] {
            let qa = preservation(ga[i], aa[i], gf[i], af[i], k);
            let qb = preservation(gb[i], ab[i], gf[i], af[i], k);
            num += (1.0 - qa) * wa + (1.0 - qb) * wb;
        }
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// Fraction of edge energy attributable to artifacts: edges in `f` stronger
/// than in either source, weighted by how poorly they are preserved.
pub fn nabf(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<f64> {
    nabf_with(f, a, b, &NabfConstants::default())
}

pub fn evaluate(f: &Tensor, a: &Tensor, b: &Tensor) -> Result<MetricReport> {
    Ok(MetricReport {
        mse: mse(f, a, b)?,
        psnr: psnr(f, a, b)?,
        ssim: ssim(f, a, b)?,
        cc: cc(f, a, b)?,
        nabf: nabf(f, a, b)?,
    })
}

pub const EVAL_CSV_HEADER: [&str; 6] = ["name", "mse", "psnr", "ssim", "cc", "nabf"];

/// Column-wise mean; PSNR averages finite entries only.
pub fn mean_report(reports: &[MetricReport]) -> Option<MetricReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let avg = |g: fn(&MetricReport) -> f64| reports.iter().map(g).sum::<f64>() / n;
    let finite: Vec<f64> = reports.iter().map(|r| r.psnr).filter(|p| p.is_finite()).collect();
    let psnr = if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    Some(MetricReport { mse: avg(|r| r.mse), psnr, ssim: avg(|r| r.ssim), cc: avg(|r| r.cc), nabf: avg(|r| r.nabf) })
}

/// Writes one row per named report followed by a `mean` row.
pub fn write_eval_csv(out: impl Write, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wr.write_record(EVAL_CSV_HEADER).map_err(csv_err)?;
    let mut record = |name: &str, r: &MetricReport| {
        wr.write_record([
            name.to_string(),
            r.mse.to_string(),
            r.psnr.to_string(),
            r.ssim.to_string(),
            r.cc.to_string(),
            r.nabf.to_string(),
        ])
    };
    for (name, r) in rows {
        record(name, r).map_err(csv_err)?;
    }
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| *r).collect();
    if let Some(m) = mean_report(&reports) {
        record("mean", &m).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}
