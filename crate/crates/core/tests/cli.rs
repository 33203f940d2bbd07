//! End-to-end behaviour of the `cdfuse` binary.

use std::path::Path;
use std::process::{Command, Output};

use cdfuse::color::{encode_image, load_luminance, ImageRGB};
use cdfuse::data::{synth_base, synth_dataset, write_pair};
use cdfuse::metrics::EVAL_CSV_HEADER;
use cdfuse::network::{load_model, parameter_count, save_model, ModelConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cdfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdfuse")).args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn model_file(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("m.cdn");
    save_model(&ModelParams::init(&ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)), &path).unwrap();
    path
}

#[test]
fn cost_reports_reduction_and_rejects_zero_sources() {
    let out = cdfuse(&["cost", "--n", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("42.86%"), "{text}");
    let out = cdfuse(&["cost", "--n", "3", "--csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,s,c,h,w,m_am,m_joint,reduction"));
    assert!(lines.next().unwrap().ends_with(",0.500000"));
    assert_eq!(cdfuse(&["cost", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(cdfuse(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cdfuse(&["fuse", "-a", "x.png"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cdn");
    let out = cdfuse(&["fuse", "--model", arg(&missing), "-a", "a.png", "-b", "b.png", "-o", "f.png"]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(cdfuse(&["--config", arg(&cfg), "cost", "--n", "2"]).status.code(), Some(2));
}

#[test]
fn mismatched_sources_exit_with_three_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path());
    let (a, b, f) = (dir.path().join("a.png"), dir.path().join("b.png"), dir.path().join("f.png"));
    encode_image(&ImageRGB::from_gray(&synth_base(16, 16, 0)).unwrap(), &a).unwrap();
    encode_image(&ImageRGB::from_gray(&synth_base(16, 12, 1)).unwrap(), &b).unwrap();
    let out = cdfuse(&["fuse", "--model", arg(&model), "-a", arg(&a), "-b", arg(&b), "-o", arg(&f)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!f.exists());
}

#[test]
fn fuse_is_deterministic_and_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path());
    let (x, y) = &synth_dataset(1, 24, 20, 3)[0];
    write_pair(dir.path(), "p", x, y).unwrap();
    let (a, b) = (dir.path().join("p_a.pgm"), dir.path().join("p_b.pgm"));
    let run = |name: &str| {
        let f = dir.path().join(name);
        let out = cdfuse(&["fuse", "--model", arg(&model), "-a", arg(&a), "-b", arg(&b), "-o", arg(&f)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(f).unwrap()
    };
    let first = run("f1.png");
    assert_eq!(first, run("f2.png"));
    let fused = load_luminance(dir.path().join("f1.png")).unwrap();
    assert_eq!(fused.shape(), &[1, 24, 20]);
}

#[test]
fn train_is_deterministic_and_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    for (i, (x, y)) in synth_dataset(4, 16, 16, 2).iter().enumerate() {
        write_pair(&data, &format!("s{i}"), x, y).unwrap();
    }
    let train = |name: &str| {
        let out_path = dir.path().join(name);
        let out = cdfuse(&[
            "--seed", "5", "train", "--data", arg(&data), "--epochs", "2", "--batch", "2", "--crop", "16", "-o",
            arg(&out_path),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_path
    };
    let (m1, m2) = (train("a.cdn"), train("b.cdn"));
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    assert_eq!(load_model(&m1).unwrap().num_reals(), parameter_count(&ModelConfig::default()));
    let history = std::fs::read_to_string(m1.with_extension("loss.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("epoch,mean_hif,mean_lif,mean_total"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn eval_writes_sorted_rows_with_six_columns() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path());
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    for (i, (x, y)) in synth_dataset(3, 16, 16, 4).iter().enumerate().rev() {
        write_pair(&data, &format!("z{i}"), x, y).unwrap();
    }
    let csv_path = dir.path().join("eval.csv");
    let out = cdfuse(&["--threads", "2", "eval", "--model", arg(&model), "--data", arg(&data), "-o", arg(&csv_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), EVAL_CSV_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let names: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(names, ["z0", "z1", "z2", "mean"]);
    assert!(rows.iter().all(|r| r.len() == 6));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = cdfuse(&["eval", "--model", arg(&model), "--data", arg(&empty), "-o", arg(&csv_path)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_of_identical_sources_has_zero_mse() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let (x, _) = &synth_dataset(1, 16, 16, 6)[0];
    write_pair(&data, "same", x, x).unwrap();
    // a model whose output is exactly its (quantized) input: identity path through d_F1/d_F2/proj
    let mut p = ModelParams::zeros(&ModelConfig::default());
    p.expand_x.data_mut()[4] = 1.0;
    p.d_f2.data_mut()[0] = 1.0;
    p.proj.data_mut()[0] = 1.0;
    let model = dir.path().join("id.cdn");
    save_model(&p, &model).unwrap();
    let csv_path = dir.path().join("eval.csv");
    let out = cdfuse(&["eval", "--model", arg(&model), "--data", arg(&data), "-o", arg(&csv_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let first = reader.records().next().unwrap().unwrap();
    assert_eq!(&first[0], "same");
    assert_eq!(first[1].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn bench_prints_parseable_csv() {
    let out = cdfuse(&["bench", "--size", "24", "--runs", "3", "--warmup", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["mode", "params", "size", "median_ms", "block_mults", "network_mults"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let params: usize = rows[0][1].parse().unwrap();
    assert_eq!(params, parameter_count(&ModelConfig::default()));
    let uni: f64 = rows[0][4].parse().unwrap();
    let alt: f64 = rows[1][4].parse().unwrap();
    assert!((alt / uni - 1.75).abs() < 1e-12);
}

#[test]
fn config_file_values_apply_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# cost extents\nc = 4\nh = 10\nw = 10\n").unwrap();
    let out = cdfuse(&["--config", arg(&cfg), "cost", "--n", "2", "--h", "20", "--csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("2,3,4,20,10,"), "{text}");
}
