//! Seeded mini-batch training with random crops.
//!
//! Each epoch shuffles the pairs, splits them into batches and takes one Adam
//! step per batch. Every pair in a batch contributes a random crop (the whole
//! image when it is no larger than the crop). Per-pair backward passes run on
//! a rayon pool whose size comes from [`TrainConfig::threads`], else
//! `CDFUSE_THREADS`, else rayon's default; gradients are averaged in batch
//! order so results do not depend on the thread count.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autograd::{backward, GradientSet};
use crate::data::load_dataset;
use crate::error::{Error, Result};
use crate::loss::{hlif_loss_with, LossConfig, LossReport, DEFAULT_TAU};
use crate::network::{fuse_luminance, ModelConfig, ModelParams};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tensor::Tensor;

pub const THREADS_ENV: &str = "CDFUSE_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    pub crop: usize,
    pub tau: f64,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 10,
            epochs: 50,
            max_steps: None,
            crop: 64,
            tau: DEFAULT_TAU,
            seed: 0,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.adam.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.crop == 0 {
            return Err(Error::Config("crop size must be at least 1".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig::with_tau(self.tau)
    }
}

/// Mean training loss over the steps of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_hif: f64,
    pub mean_lif: f64,
    pub mean_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub steps: usize,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,mean_hif,mean_lif,mean_total";

pub fn write_history_csv(mut out: impl Write, history: &[EpochStats]) -> Result<()> {
    writeln!(out, "{HISTORY_CSV_HEADER}")?;
    for e in history {
        writeln!(out, "{},{},{},{}", e.epoch, e.mean_hif, e.mean_lif, e.mean_total)?;
    }
    Ok(())
}

/// Thread count from the config, then the environment.
pub fn resolve_threads(requested: Option<usize>) -> Result<Option<usize>> {
    if requested.is_some() {
        return Ok(requested);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` inside a rayon pool sized per [`resolve_threads`].
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = resolve_threads(threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

fn crop(t: &Tensor, i0: usize, j0: usize, ch: usize, cw: usize) -> Tensor {
    let w = t.shape()[2];
    Tensor::from_fn(&[1, ch, cw], |k| t.data()[(i0 + k / cw) * w + j0 + k % cw])
}

fn random_crop(x: &Tensor, y: &Tensor, size: usize, rng: &mut impl Rng) -> (Tensor, Tensor) {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let (ch, cw) = (size.min(h), size.min(w));
    let i0 = rng.random_range(0..=h - ch);
    let j0 = rng.random_range(0..=w - cw);
    if (ch, cw) == (h, w) {
        return (x.clone(), y.clone());
    }
    (crop(x, i0, j0, ch, cw), crop(y, i0, j0, ch, cw))
}

fn check_pairs(pairs: &[(Tensor, Tensor)], min_extent: usize) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    for (i, (x, y)) in pairs.iter().enumerate() {
        x.same_shape(y)?;
        let (c, h, w) = x.chw()?;
        if c != 1 || h < min_extent || w < min_extent {
            return Err(Error::dim(format!(
                "pair {i} has shape {:?}; need one plane at least {min_extent}×{min_extent}",
                x.shape()
            )));
        }
    }
    Ok(())
}

/// Trains a freshly initialized model on in-memory luminance pairs.
pub fn train_pairs(config: &TrainConfig, pairs: &[(Tensor, Tensor)]) -> Result<TrainOutcome> {
    train_pairs_with(config, pairs, |_| {})
}

/// As [`train_pairs`], calling `on_epoch` after each epoch.
pub fn train_pairs_with(
    config: &TrainConfig,
    pairs: &[(Tensor, Tensor)],
    on_epoch: impl FnMut(&EpochStats) + Send,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = ModelParams::init(&config.model, &mut rng);
    train_from(config, pairs, params, on_epoch)
}

/// Continues training from given parameters. Shuffling and crops are seeded
/// from `config.seed` alone.
pub fn train_from(
    config: &TrainConfig,
    pairs: &[(Tensor, Tensor)],
    params: ModelParams,
    on_epoch: impl FnMut(&EpochStats) + Send,
) -> Result<TrainOutcome> {
    config.validate()?;
    if params.config() != config.model {
        return Err(Error::Config(format!(
            "initial parameters have layout {:?}, config asks for {:?}",
            params.config(),
            config.model
        )));
    }
    check_pairs(pairs, config.model.kernel_size)?;
    let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_da7a);
    with_pool(config.threads, move || run_epochs(config, pairs, params, rng, on_epoch))?
}

fn run_epochs(
    config: &TrainConfig,
    pairs: &[(Tensor, Tensor)],
    mut params: ModelParams,
    mut rng: ChaCha8Rng,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let loss_cfg = config.loss();
    let mut state = AdamState::new(&params);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut steps = 0;
    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut hif, mut lif, mut total, mut n) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let crops: Vec<(Tensor, Tensor)> =
                batch.iter().map(|&i| random_crop(&pairs[i].0, &pairs[i].1, config.crop, &mut rng)).collect();
            let results: Vec<Result<(LossReport, GradientSet)>> =
                crops.par_iter().map(|(x, y)| backward(&params, x, y, &loss_cfg)).collect();
            let mut grad = ModelParams::zeros(&config.model);
            let inv = 1.0 / batch.len() as f64;
            let (mut bh, mut bl, mut bt) = (0.0, 0.0, 0.0);
            for r in results {
                let (report, g) = r?;
                for (acc, gi) in grad.tensors_mut().into_iter().zip(g.tensors()) {
                    acc.axpy(inv, gi)?;
                }
                bh += report.hif * inv;
                bl += report.lif * inv;
                bt += report.total * inv;
            }
            adam_step(&mut params, &grad, &mut state, &config.adam)?;
            steps += 1;
            hif += bh;
            lif += bl;
            total += bt;
            n += 1;
        }
        if n == 0 {
            break 'epochs;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            mean_hif: hif / n as f64,
            mean_lif: lif / n as f64,
            mean_total: total / n as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome { params, history, steps })
}

/// Trains on a `<stem>_a` / `<stem>_b` dataset directory.
pub fn train(
    config: &TrainConfig,
    dataset_dir: impl AsRef<Path>,
    on_epoch: impl FnMut(&EpochStats) + Send,
) -> Result<TrainOutcome> {
    let pairs: Vec<(Tensor, Tensor)> = load_dataset(dataset_dir)?.into_iter().map(|(_, x, y)| (x, y)).collect();
    train_pairs_with(config, &pairs, on_epoch)
}

/// Loss terms averaged over a set of pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanLoss {
    pub hif: f64,
    pub lif: f64,
    pub total: f64,
}

/// Mean full-image HLIF of a model over a set of pairs.
pub fn mean_loss(params: &ModelParams, pairs: &[(Tensor, Tensor)], loss: &LossConfig) -> Result<MeanLoss> {
    if pairs.is_empty() {
        return Err(Error::Config("no pairs to evaluate".into()));
    }
    let reports: Vec<Result<LossReport>> = pairs
        .par_iter()
        .map(|(x, y)| {
            let f = fuse_luminance(params, x, y)?;
            hlif_loss_with(&f, x, y, loss)
        })
        .collect();
    let inv = 1.0 / pairs.len() as f64;
    let mut out = MeanLoss::default();
    for r in reports {
        let r = r?;
        out.hif += r.hif * inv;
        out.lif += r.lif * inv;
        out.total += r.total * inv;
    }
    Ok(out)
}
