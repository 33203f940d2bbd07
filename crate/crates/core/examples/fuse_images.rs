//! Fuses a color exposure pair and a color/gray (visible/infrared-style)
//! pair, writing PNGs. Uses a saved model if given, else trains briefly.
//!
//! ```text
//! cargo run --release --example fuse_images -- [out_dir] [model.cdn]
//! ```

use std::path::PathBuf;

use cdfuse::color::{encode_image, fuse_color, ImageRGB, SourceKind};
use cdfuse::data::{synth_base, synth_dataset};
use cdfuse::network::load_model;
use cdfuse::train::{train_pairs, TrainConfig};
use cdfuse::Tensor;

/// Tints a gray plane into RGB with per-channel gains.
fn tinted(plane: &Tensor, gains: [f64; 3]) -> anyhow::Result<ImageRGB> {
    let (_, h, w) = plane.chw()?;
    let px = Tensor::from_fn(&[3, h, w], |i| plane.data()[i % (h * w)] * gains[i / (h * w)]);
    Ok(ImageRGB::new(px)?)
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "fused_out".into()));
    let model = match args.next() {
        Some(path) => load_model(path)?,
        None => {
            let cfg = TrainConfig { epochs: 30, max_steps: Some(60), ..Default::default() };
            train_pairs(&cfg, &synth_dataset(20, 64, 64, 0))?.params
        }
    };
    std::fs::create_dir_all(&out_dir)?;

    let base = synth_base(96, 128, 42);
    let over = tinted(&base.map(|v| v.powf(0.4)), [1.0, 0.9, 0.75])?;
    let under = tinted(&base.map(|v| v.powf(2.5)), [0.8, 0.9, 1.0])?;
    let fused = fuse_color(&model, &over, SourceKind::Color, &under, SourceKind::Color)?;
    for (name, img) in [("over.png", &over), ("under.png", &under), ("exposure_fused.png", &fused)] {
        encode_image(img, out_dir.join(name))?;
    }

    // thermal-like source: inverted, blurred-looking structure, gray only
    let thermal = ImageRGB::from_gray(&synth_base(96, 128, 7).map(|v| 1.0 - v))?;
    let fused_ir = fuse_color(&model, &over, SourceKind::Color, &thermal, SourceKind::Gray)?;
    encode_image(&thermal, out_dir.join("thermal.png"))?;
    encode_image(&fused_ir, out_dir.join("visible_thermal_fused.png"))?;

    println!("wrote 5 images to {}", out_dir.display());
    Ok(())
}
