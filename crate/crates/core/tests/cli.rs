use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use seld::config::RunConfig;
use seld::features::read_features;
use seld::labels::{read_labels, DistanceUnit};
use seld::metrics::compute_metrics;
use seld::model::count_params;

fn seld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seld"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = seld(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml")
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    seld::fsio::list_with_extension(dir, ext).unwrap()
}

fn write_mono(path: &Path) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 24_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for i in 0..24_000 {
        w.write_sample(((i % 100) * 50) as i16).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn synth_is_deterministic_and_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--out", p(&a), "--clips", "2", "--seed", "42"]);
    ok(&["synth", "--out", p(&b), "--clips", "2", "--seed", "42"]);
    for sub in ["audio", "metadata"] {
        let ext = if sub == "audio" { "wav" } else { "csv" };
        let (fa, fb) = (files(&a.join(sub), ext), files(&b.join(sub), ext));
        assert_eq!(fa.len(), 2);
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }
    for f in files(&a.join("metadata"), "csv") {
        for l in read_labels(&f, DistanceUnit::Meters).unwrap() {
            assert!((-90.0..=90.0).contains(&l.azimuth_deg));
        }
    }
    let empty = dir.path().join("empty");
    ok(&["synth", "--out", p(&empty), "--clips", "0"]);
    assert!(files(&empty.join("audio"), "wav").is_empty());
}

#[test]
fn features_segments_errors_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--clips", "2"]);
    write_mono(&data.join("audio").join("mono.wav"));
    let out = dir.path().join("feat");
    ok(&["features", "--in", p(&data), "--out", p(&out)]);
    let feats = files(&out, "feat");
    assert_eq!(feats.len(), 2);
    let f = read_features(&feats[0]).unwrap();
    assert_eq!(f.tensor.shape(), &[7, 250, 64]);
    let errors = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 2);
    assert!(errors.contains("mono.wav"));
    let first: Vec<Vec<u8>> = feats.iter().map(|f| std::fs::read(f).unwrap()).collect();
    ok(&["features", "--in", p(&data), "--out", p(&out)]);
    let second: Vec<Vec<u8>> = feats.iter().map(|f| std::fs::read(f).unwrap()).collect();
    assert_eq!(first, second);

    let bad = dir.path().join("bad");
    std::fs::create_dir_all(&bad).unwrap();
    write_mono(&bad.join("only.wav"));
    let out = seld(&["features", "--in", p(&bad), "--out", p(&dir.path().join("bad_out"))]);
    assert_eq!(out.status.code(), Some(1));
}

fn steps_of(summary: &str) -> usize {
    let open = summary.rfind('(').unwrap();
    summary[open + 1..].split(' ').next().unwrap().parse().unwrap()
}

#[test]
fn train_infer_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--clips", "5"]);
    let run = dir.path().join("run");
    let cfg = toy_config();
    let start = std::time::Instant::now();
    let summary = ok(&[
        "train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run), "--set", "train.batch_size=2",
    ]);
    assert!(start.elapsed().as_secs() < 300);
    // 4 training clips, batch 2, 2 epochs
    assert_eq!(steps_of(&summary), 4);
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(run.join("best.ckpt").is_file() && run.join("last.ckpt").is_file());
    RunConfig::load(&run.join("config.toml"), &[]).unwrap();

    let acs = ok(&[
        "train", "--config", p(&cfg), "--data", p(&data), "--out", p(&dir.path().join("acs")), "--acs", "--set",
        "train.batch_size=2",
    ]);
    assert_eq!(steps_of(&acs), 8);

    let pred = dir.path().join("pred");
    ok(&["infer", "--ckpt", p(&run.join("best.ckpt")), "--in", p(&data), "--out", p(&pred)]);
    assert_eq!(files(&pred, "csv").len(), 5);

    let report = dir.path().join("m.txt");
    let line = ok(&["eval", "--pred", p(&pred), "--ref", p(&data), "--out", p(&report)]);
    let pairs: Vec<_> = files(&pred, "csv")
        .iter()
        .zip(files(&data.join("metadata"), "csv"))
        .map(|(a, b)| (read_labels(a, DistanceUnit::Meters).unwrap(), read_labels(&b, DistanceUnit::Meters).unwrap()))
        .collect();
    assert_eq!(line.trim(), compute_metrics(&pairs).summary_line());
    assert!(dir.path().join("m_per_class.csv").is_file());
}

#[test]
fn eval_self_empty_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--clips", "3"]);
    let meta = data.join("metadata");
    let report = dir.path().join("r.txt");
    let line = ok(&["eval", "--pred", p(&meta), "--ref", p(&data), "--out", p(&report)]);
    assert_eq!(line.trim(), "F20=1.000 DOAE=0.0 RDE=0.000");

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    for f in files(&meta, "csv") {
        std::fs::write(empty.join(f.file_name().unwrap()), "").unwrap();
    }
    let line = ok(&["eval", "--pred", p(&empty), "--ref", p(&meta), "--out", p(&report)]);
    assert!(line.starts_with("F20=0.000"), "{line}");
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("tp=0\n") && text.contains("fp=0\n"));

    std::fs::remove_file(empty.join("clip_0001.csv")).unwrap();
    let out = seld(&["eval", "--pred", p(&empty), "--ref", p(&meta), "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clip_0001"));
}

#[test]
fn config_errors_exit_one_with_key_name() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(toy_config()).unwrap();
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, text.replace("grad_clip = 5.0\n", "")).unwrap();
    let out = seld(&["count", "--config", p(&broken)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grad_clip"));
    let out = seld(&["count", "--config", p(&toy_config()), "--set", "train.nope=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.nope"));
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--clips", "3"]);
    let out = seld(&[
        "train", "--config", p(&toy_config()), "--data", p(&data), "--out", p(&dir.path().join("run")), "--set",
        "train.lr=1e300", "--set", "train.batch_size=1", "--set", "train.grad_clip=0.0",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn count_matches_library() {
    let out = ok(&["count", "--config", p(&toy_config())]);
    let cfg = RunConfig::load(&toy_config(), &[]).unwrap();
    assert!(out.contains(&format!("params={}\n", count_params(&cfg.model))));
    let committed = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml"), &[]).unwrap();
    assert_eq!(committed, RunConfig::default());
    assert_eq!(cfg, RunConfig::toy());
}

#[test]
fn bench_scan_and_usage_errors() {
    let out = ok(&["bench-scan", "--lengths", "64,128", "--repeat", "2"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "length,median_s,min_s,max_s");
    assert_eq!(lines.len(), 3);
    assert_eq!(seld(&["bench-scan", "--lengths", "64", "--repeat", "0"]).status.code(), Some(1));
    assert_eq!(seld(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(seld(&["--help"]).status.code(), Some(0));
}
