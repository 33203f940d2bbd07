//! Combined-dictionary deep-unfolding network for two-source image fusion.
//!
//! The crate covers the whole pipeline: a small `f64` tensor substrate with a
//! same-padded convolution pair ([`tensor`]), the block-structured unfolded
//! sparse-coding step and its alternating baseline ([`cdblock`]), the
//! end-to-end luminance fuser ([`network`]), color handling and image I/O
//! ([`color`]), the unsupervised fidelity loss ([`loss`]), hand-derived
//! gradients and Adam training ([`autograd`], [`optim`], [`train`]),
//! fusion-quality metrics ([`metrics`]) and the multiplication-count cost
//! model ([`cost`]). Synthetic exposure pairs and dataset directories live in
//! [`data`].

pub mod autograd;
pub mod cdblock;
pub mod color;
pub mod config;
pub mod cost;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
