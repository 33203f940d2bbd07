//! Command-line front end: `fuse`, `train`, `eval`, `bench`, `cost`.
//!
//! Exit codes: 0 success, 2 usage or input errors, 3 shape mismatches.
//! The resolved configuration is printed to stderr before each run; results
//! go to stdout or to the requested files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cdfuse::color::{decode_image, encode_image, fuse_color, SourceKind};
use cdfuse::config::KeyValues;
use cdfuse::cost::{bench_interleaved, CostReport, BENCH_CSV_HEADER};
use cdfuse::data::{list_pairs, synth_base, synth_exposure_pair};
use cdfuse::metrics::{evaluate, write_eval_csv, MetricReport};
use cdfuse::network::{fuse_luminance, load_model, save_model, ModelConfig, ModelParams, UpdateMode};
use cdfuse::optim::AdamConfig;
use cdfuse::train::{train, with_pool, write_history_csv, TrainConfig};
use cdfuse::{Error, Result};

const CONFIG_KEYS: &[&str] = &[
    "seed", "threads", "epochs", "lr", "batch", "tau", "crop", "max_steps", "blocks", "channels", "kernel", "size",
    "runs", "warmup", "s", "c", "h", "w",
];

#[derive(Parser)]
#[command(name = "cdfuse", version, about = "Combined-dictionary unfolding network for two-source image fusion")]
struct Cli {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to CDFUSE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse two images with a trained model.
    Fuse {
        #[arg(long)]
        model: PathBuf,
        #[arg(short = 'a')]
        a: PathBuf,
        #[arg(short = 'b')]
        b: PathBuf,
        #[arg(short = 'o')]
        out: PathBuf,
        /// Treat source a as single-channel (contributes luminance only).
        #[arg(long)]
        gray_a: bool,
        #[arg(long)]
        gray_b: bool,
    },
    /// Train a model on a directory of `<stem>_a` / `<stem>_b` pairs.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        crop: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        kernel: Option<usize>,
        #[arg(short = 'o')]
        out: PathBuf,
        /// Loss-history CSV (default: model path with `.loss.csv`).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a model on every pair of a dataset directory.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short = 'o')]
        out: PathBuf,
    },
    /// Time whole-image fusion and count kernel multiplications.
    Bench {
        #[arg(long, value_enum, default_value = "both")]
        mode: BenchMode,
        #[arg(long)]
        size: Option<usize>,
        /// Benchmark a saved model instead of a seeded initialization.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Closed-form multiplication counts of joint and alternating updates.
    Cost {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        s: Option<u64>,
        #[arg(long)]
        c: Option<u64>,
        #[arg(long)]
        h: Option<u64>,
        #[arg(long)]
        w: Option<u64>,
        /// Print CSV instead of the aligned table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    Unified,
    Alternating,
    Both,
}

fn banner(cmd: &str, entries: &[(&str, String)]) {
    let body: Vec<String> = entries.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("cdfuse {cmd}: {}", body.join(" "));
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Dimension(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    file.reject_unknown(CONFIG_KEYS)?;
    let seed = file.resolve("seed", cli.seed, 0u64)?;
    let threads = file.get::<usize>("threads")?;
    let threads = cli.threads.or(threads);
    match cli.cmd {
        Command::Fuse { model, a, b, out, gray_a, gray_b } => fuse(&model, &a, &b, &out, gray_a, gray_b, seed),
        Command::Train { data, epochs, lr, batch, tau, crop, max_steps, blocks, channels, kernel, out, history } => {
            let d = TrainConfig::default();
            let model = ModelConfig {
                blocks: file.resolve("blocks", blocks, d.model.blocks)?,
                channels: file.resolve("channels", channels, d.model.channels)?,
                kernel_size: file.resolve("kernel", kernel, d.model.kernel_size)?,
            };
            let cfg = TrainConfig {
                model,
                adam: AdamConfig { learning_rate: file.resolve("lr", lr, d.adam.learning_rate)?, ..d.adam },
                batch_size: file.resolve("batch", batch, d.batch_size)?,
                epochs: file.resolve("epochs", epochs, d.epochs)?,
                max_steps: max_steps.or(file.get("max_steps")?),
                crop: file.resolve("crop", crop, d.crop)?,
                tau: file.resolve("tau", tau, d.tau)?,
                seed,
                threads,
            };
            let history = history.unwrap_or_else(|| out.with_extension("loss.csv"));
            train_cmd(&cfg, &data, &out, &history)
        }
        Command::Eval { model, data, out } => eval(&model, &data, &out, seed, threads),
        Command::Bench { mode, size, model, runs, warmup } => {
            let size = file.resolve("size", size, 256usize)?;
            let runs = file.resolve("runs", runs, 20usize)?;
            let warmup = file.resolve("warmup", warmup, 5usize)?;
            let config = ModelConfig {
                blocks: file.resolve("blocks", None, 3usize)?,
                channels: file.resolve("channels", None, 5usize)?,
                kernel_size: file.resolve("kernel", None, 3usize)?,
            };
            bench(mode, size, model.as_deref(), config, runs, warmup, seed)
        }
        Command::Cost { n, s, c, h, w, csv } => {
            let s = file.resolve("s", s, 3)?;
            let c = file.resolve("c", c, 5)?;
            let h = file.resolve("h", h, 256)?;
            let w = file.resolve("w", w, 256)?;
            let shown = [("n", n), ("s", s), ("c", c), ("h", h), ("w", w), ("seed", seed)];
            banner("cost", &shown.map(|(k, v)| (k, v.to_string())));
            let report = CostReport::new(n, s, c, h, w)?;
            if csv {
                print!("{}", report.to_csv());
            } else {
                print!("{report}");
            }
            Ok(())
        }
    }
}

fn fuse(model: &Path, a: &Path, b: &Path, out: &Path, gray_a: bool, gray_b: bool, seed: u64) -> Result<()> {
    banner(
        "fuse",
        &[
            ("model", model.display().to_string()),
            ("a", a.display().to_string()),
            ("b", b.display().to_string()),
            ("out", out.display().to_string()),
            ("gray_a", gray_a.to_string()),
            ("gray_b", gray_b.to_string()),
            ("seed", seed.to_string()),
        ],
    );
    let params = load_model(model)?;
    let ia = decode_image(a)?;
    let ib = decode_image(b)?;
    let kind = |g: bool| if g { SourceKind::Gray } else { SourceKind::Color };
    let fused = fuse_color(&params, &ia, kind(gray_a), &ib, kind(gray_b))?;
    encode_image(&fused, out)
}

fn train_cmd(cfg: &TrainConfig, data: &Path, out: &Path, history: &Path) -> Result<()> {
    banner(
        "train",
        &[
            ("data", data.display().to_string()),
            ("epochs", cfg.epochs.to_string()),
            ("lr", cfg.adam.learning_rate.to_string()),
            ("batch", cfg.batch_size.to_string()),
            ("tau", cfg.tau.to_string()),
            ("crop", cfg.crop.to_string()),
            ("max_steps", cfg.max_steps.map_or("none".into(), |m| m.to_string())),
            ("blocks", cfg.model.blocks.to_string()),
            ("channels", cfg.model.channels.to_string()),
            ("kernel", cfg.model.kernel_size.to_string()),
            ("threads", cfg.threads.map_or("auto".into(), |t| t.to_string())),
            ("seed", cfg.seed.to_string()),
        ],
    );
    let outcome = train(cfg, data, |e| {
        eprintln!(
            "epoch {:>4}/{}  hif {:.6}  lif {:.6}  total {:.6}",
            e.epoch, cfg.epochs, e.mean_hif, e.mean_lif, e.mean_total
        )
    })?;
    save_model(&outcome.params, out)?;
    let f = std::fs::File::create(history).map_err(|e| Error::File { path: history.to_path_buf(), source: e })?;
    write_history_csv(std::io::BufWriter::new(f), &outcome.history)?;
    eprintln!("{} steps; model written to {}, history to {}", outcome.steps, out.display(), history.display());
    Ok(())
}

fn eval(model: &Path, data: &Path, out: &Path, seed: u64, threads: Option<usize>) -> Result<()> {
    banner(
        "eval",
        &[
            ("model", model.display().to_string()),
            ("data", data.display().to_string()),
            ("out", out.display().to_string()),
            ("threads", threads.map_or("auto".into(), |t| t.to_string())),
            ("seed", seed.to_string()),
        ],
    );
    let params = load_model(model)?;
    let pairs = list_pairs(data)?;
    if pairs.is_empty() {
        return Err(Error::Config(format!("no `<stem>_a` / `<stem>_b` pairs in {}", data.display())));
    }
    let rows: Vec<Result<(String, MetricReport)>> = with_pool(threads, || {
        pairs
            .par_iter()
            .map(|p| {
                let x = cdfuse::color::load_luminance(&p.a)?;
                let y = cdfuse::color::load_luminance(&p.b)?;
                let f = fuse_luminance(&params, &x, &y)?;
                Ok((p.stem.clone(), evaluate(&f, &x, &y)?))
            })
            .collect()
    })?;
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let f = std::fs::File::create(out).map_err(|e| Error::File { path: out.to_path_buf(), source: e })?;
    write_eval_csv(std::io::BufWriter::new(f), &rows)?;
    eprintln!("{} pairs scored; results in {}", rows.len(), out.display());
    Ok(())
}

fn bench(
    mode: BenchMode,
    size: usize,
    model: Option<&Path>,
    config: ModelConfig,
    runs: usize,
    warmup: usize,
    seed: u64,
) -> Result<()> {
    let params = match model {
        Some(p) => load_model(p)?,
        None => {
            config.validate()?;
            ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(seed))
        }
    };
    let cfg = params.config();
    banner(
        "bench",
        &[
            ("size", size.to_string()),
            ("runs", runs.to_string()),
            ("warmup", warmup.to_string()),
            ("blocks", cfg.blocks.to_string()),
            ("channels", cfg.channels.to_string()),
            ("kernel", cfg.kernel_size.to_string()),
            ("model", model.map_or("seeded-init".into(), |p| p.display().to_string())),
            ("seed", seed.to_string()),
        ],
    );
    if size < cfg.kernel_size {
        return Err(Error::Config(format!("bench size {size} is smaller than the kernel")));
    }
    let base = synth_base(size, size, seed);
    let (x, y) = synth_exposure_pair(&base, 2.5, 0.4, None, seed)?;
    let modes: &[UpdateMode] = match mode {
        BenchMode::Unified => &[UpdateMode::Unified],
        BenchMode::Alternating => &[UpdateMode::Alternating],
        BenchMode::Both => &[UpdateMode::Unified, UpdateMode::Alternating],
    };
    println!("{BENCH_CSV_HEADER}");
    for r in bench_interleaved(&params, modes, &x, &y, warmup, runs)? {
        println!("{}", r.csv_row());
    }
    Ok(())
}
