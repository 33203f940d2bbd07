//! YCbCr conversion, chrominance fusion and image file I/O.
//!
//! Only the luminance plane goes through the network. Chroma planes are
//! blended with weights `|c − 0.5|`, so the more saturated source wins and a
//! neutral (grayscale) source defers to the other.

use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::network::{fuse_luminance, ModelParams};
use crate::tensor::Tensor;

/// RGB image, `3 × H × W` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    pixels: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageYCbCr {
    pub y: Tensor,
    pub cb: Tensor,
    pub cr: Tensor,
}

impl ImageRGB {
    /// Values are clamped into `[0, 1]`.
    pub fn new(pixels: Tensor) -> Result<Self> {
        let (c, _, _) = pixels.chw()?;
        if c != 3 {
            return Err(Error::dim(format!("RGB image needs 3 planes, got {c}")));
        }
        Ok(ImageRGB { pixels: pixels.map(|v| v.clamp(0.0, 1.0)) })
    }

    /// Gray image replicated into three planes.
    pub fn from_gray(plane: &Tensor) -> Result<Self> {
        let (c, _, _) = plane.chw()?;
        if c != 1 {
            return Err(Error::dim(format!("gray image needs 1 plane, got {c}")));
        }
        Self::new(Tensor::concat_channels(&[plane, plane, plane])?)
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn plane(&self, c: usize) -> Tensor {
        self.pixels.channels(c, 1).expect("plane index in range")
    }
}

const KB: f64 = 0.564;
const KR: f64 = 0.713;

/// BT.601 full range.
pub fn rgb_to_ycbcr(img: &ImageRGB) -> ImageYCbCr {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let d = img.pixels.data();
    let (r, g, b) = (&d[..n], &d[n..2 * n], &d[2 * n..]);
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for i in 0..n {
        let yy = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
        y.push(yy);
        cb.push((0.5 + (b[i] - yy) * KB).clamp(0.0, 1.0));
        cr.push((0.5 + (r[i] - yy) * KR).clamp(0.0, 1.0));
    }
    let t = |v| Tensor::new(&[1, h, w], v).expect("plane shape");
    ImageYCbCr { y: t(y), cb: t(cb), cr: t(cr) }
}

pub fn ycbcr_to_rgb(img: &ImageYCbCr) -> Result<ImageRGB> {
    img.y.same_shape(&img.cb)?;
    img.y.same_shape(&img.cr)?;
    let (_, h, w) = img.y.chw()?;
    let n = h * w;
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        let y = img.y.data()[i];
        let r = y + (img.cr.data()[i] - 0.5) / KR;
        let b = y + (img.cb.data()[i] - 0.5) / KB;
        let g = (y - 0.299 * r - 0.114 * b) / 0.587;
        out[i] = r;
        out[n + i] = g;
        out[2 * n + i] = b;
    }
    ImageRGB::new(Tensor::new(&[3, h, w], out)?)
}

/// Saturation-weighted chroma blend `(c1·|c1−½| + c2·|c2−½|) / (|c1−½| + |c2−½|)`;
/// where both inputs are (nearly) neutral the plain midpoint is used.
pub fn fuse_chrominance(c1: &Tensor, c2: &Tensor) -> Result<Tensor> {
    c1.zip_map(c2, |a, b| {
        let wa = (a - 0.5).abs();
        let wb = (b - 0.5).abs();
        let den = wa + wb;
        if den < 1e-6 {
            0.5 * (a + b)
        } else if wb == 0.0 {
            a
        } else if wa == 0.0 {
            b
        } else {
            (a * wa + b * wb) / den
        }
    })
}

/// How a source enters the color pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceKind {
    #[default]
    Color,
    /// Single-channel sensor (e.g. infrared): contributes luminance only.
    Gray,
}

/// Fusion in YCbCr space: network on Y, saturation-weighted blend on Cb/Cr.
/// A [`SourceKind::Gray`] source has its chroma treated as neutral, so the
/// other source's chroma is adopted unchanged.
pub fn fuse_ycbcr(
    params: &ModelParams,
    a: &ImageYCbCr,
    kind_a: SourceKind,
    b: &ImageYCbCr,
    kind_b: SourceKind,
) -> Result<ImageYCbCr> {
    if a.y.shape() != b.y.shape() {
        return Err(Error::dim(format!("source sizes differ: {:?} vs {:?}", a.y.shape(), b.y.shape())));
    }
    let y = fuse_luminance(params, &a.y, &b.y)?;
    let neutral = Tensor::filled(a.y.shape(), 0.5);
    let chroma = |img: &ImageYCbCr, kind, blue: bool| -> Tensor {
        match (kind, blue) {
            (SourceKind::Gray, _) => neutral.clone(),
            (SourceKind::Color, true) => img.cb.clone(),
            (SourceKind::Color, false) => img.cr.clone(),
        }
    };
    let cb = fuse_chrominance(&chroma(a, kind_a, true), &chroma(b, kind_b, true))?;
    let cr = fuse_chrominance(&chroma(a, kind_a, false), &chroma(b, kind_b, false))?;
    Ok(ImageYCbCr { y, cb, cr })
}

/// Full-color fusion of two RGB images; see [`fuse_ycbcr`].
pub fn fuse_color(
    params: &ModelParams,
    a: &ImageRGB,
    kind_a: SourceKind,
    b: &ImageRGB,
    kind_b: SourceKind,
) -> Result<ImageRGB> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::dim(format!(
            "source sizes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    ycbcr_to_rgb(&fuse_ycbcr(params, &rgb_to_ycbcr(a), kind_a, &rgb_to_ycbcr(b), kind_b)?)
}

fn decode_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Decode { path: path.to_path_buf(), message: message.into() }
}

/// Reads PNG or any portable anymap (PBM/PGM/PPM/PAM); gray files are
/// promoted to three equal planes.
pub fn decode_image(path: impl AsRef<Path>) -> Result<ImageRGB> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::file(path, e))?
        .with_guessed_format()
        .map_err(|e| decode_err(path, e.to_string()))?;
    if reader.format().is_none() {
        return Err(decode_err(path, "unsupported or unrecognized image format"));
    }
    let img = reader.decode().map_err(|e| decode_err(path, e.to_string()))?;
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let n = w * h;
    let mut data = vec![0.0; 3 * n];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = px.0[c] as f64;
        }
    }
    ImageRGB::new(Tensor::new(&[3, h, w], data)?)
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        other => Err(Error::Encode {
            path: path.to_path_buf(),
            message: format!("unsupported output extension {other:?}; use .png, .ppm or .pgm"),
        }),
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes 8-bit PNG or PPM/PGM depending on the extension. `.pgm` stores the
/// luminance plane only.
pub fn encode_image(img: &ImageRGB, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let n = img.width() * img.height();
    let d = img.pixels.data();
    let enc_err = |e: image::ImageError| Error::Encode { path: path.to_path_buf(), message: e.to_string() };
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        let y = rgb_to_ycbcr(img).y;
        let buf: Vec<u8> = y.data().iter().map(|&v| to_u8(v)).collect();
        let gray = image::GrayImage::from_raw(w, h, buf).expect("buffer matches extent");
        return gray.save_with_format(path, format).map_err(enc_err);
    }
    let mut buf = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            buf.push(to_u8(d[c * n + i]));
        }
    }
    let rgb = RgbImage::from_raw(w, h, buf).expect("buffer matches extent");
    rgb.save_with_format(path, format).map_err(enc_err)
}

/// Loads the luminance plane of an image file.
pub fn load_luminance(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(rgb_to_ycbcr(&decode_image(path)?).y)
}
