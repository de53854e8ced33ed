use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn moqe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moqe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let present = ["train-images", "train-labels", "t10k-images", "t10k-labels"].iter().all(|stem| {
        fs::read_dir(&dir)
            .map(|entries| entries.flatten().any(|e| e.file_name().to_string_lossy().starts_with(stem)))
            .unwrap_or(false)
    });
    present.then_some(dir)
}

macro_rules! require_data {
    () => {
        match data_dir() {
            Some(d) => d,
            None => {
                eprintln!("MNIST files not found; skipping");
                return;
            }
        }
    };
}

#[test]
fn gradcheck_passes_and_reports_every_step() {
    let o = moqe(&["gradcheck", "--configs", "3", "--data-dir", "/nonexistent"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("synthetic"));
    for step in ["1e-4", "1e-5", "1e-6"] {
        assert!(text.contains(&format!("finite-diff({step})")), "{text}");
    }
}

#[test]
fn gradcheck_catches_an_injected_sign_error() {
    let o = moqe(&["gradcheck", "--configs", "2", "--data-dir", "/nonexistent", "--inject-sign-error"]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn verify_data_reports_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = moqe(&["verify-data", "--data-dir", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn verify_data_names_a_truncated_file() {
    let src = require_data!();
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(&src).unwrap().flatten() {
        fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    let labels = fs::read_dir(dir.path())
        .unwrap()
        .flatten()
        .find(|e| e.file_name().to_string_lossy().starts_with("t10k-labels"))
        .unwrap()
        .path();
    // decompressed and truncated, so the header promises more than is there
    let raw = moqe::mnist::maybe_gunzip(&fs::read(&labels).unwrap()).unwrap();
    fs::remove_file(&labels).unwrap();
    fs::write(dir.path().join("t10k-labels-idx1-ubyte"), &raw[..5000]).unwrap();

    let o = moqe(&["verify-data", "--data-dir", dir.path().to_str().unwrap()]);
    let text = stdout(&o);
    assert!(!o.status.success());
    let line = text.lines().find(|l| l.starts_with("FAIL")).unwrap();
    assert!(line.contains("t10k-labels") && line.contains("offset"), "{line}");
}

#[test]
fn verify_data_passes_on_canonical_files() {
    let src = require_data!();
    let o = moqe(&["verify-data", "--data-dir", src.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("60000 train / 10000 test"));
}

#[test]
fn zero_epoch_run_then_eval_is_deterministic() {
    let data = require_data!();
    let out = tempfile::tempdir().unwrap();
    let run = out.path().join("run");
    let o = moqe(&[
        "train",
        "--experts",
        "2",
        "--epochs",
        "0",
        "--seed",
        "5",
        "--data-dir",
        data.to_str().unwrap(),
        "--out-dir",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.toml", "checkpoint.json", "metrics.csv", "compute.csv", "timing.csv", "histograms.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    let ck = moqe::moqe::Checkpoint::load(&run.join("checkpoint.json")).unwrap();
    let init = moqe::moqe::init_model(2, 5).unwrap();
    assert_eq!(ck.epoch, 0);
    assert_eq!(ck.experts, init.experts().map(<[f64]>::to_vec).collect::<Vec<_>>());

    let eval = |dir: &Path| {
        moqe(&[
            "eval",
            "--checkpoint",
            run.join("checkpoint.json").to_str().unwrap(),
            "--train-subset",
            "0",
            "--data-dir",
            data.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
        ])
    };
    let (a, b) = (out.path().join("a"), out.path().join("b"));
    let (ea, eb) = (eval(&a), eval(&b));
    assert!(ea.status.success());
    let lines = |o: &Output| stdout(o).lines().filter(|l| l.contains("accuracy")).map(String::from).collect::<Vec<_>>();
    assert_eq!(lines(&ea), lines(&eb));
    let ha = fs::read_to_string(a.join("histograms.csv")).unwrap();
    assert_eq!(ha, fs::read_to_string(b.join("histograms.csv")).unwrap());
    let total: usize = ha
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).map(|v| v.parse::<usize>().unwrap()).sum::<usize>())
        .sum();
    assert_eq!(total, 10_000);

    // in-process oracle for the reported test accuracy
    let set = moqe::mnist::MnistDataset::load_dir(&data).unwrap();
    let test: Vec<_> = set.test.iter().collect();
    let acc = moqe::moqe::evaluate(&ck.to_model().unwrap(), &test).unwrap();
    assert!(lines(&ea).iter().any(|l| l.contains(&format!("{:.2}%", 100.0 * acc))));
}

#[test]
fn identical_configs_give_identical_metrics() {
    let data = require_data!();
    let out = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let dir = out.path().join(name);
        let mut args = vec![
            "train",
            "--train-subset",
            "40",
            "--epochs",
            "2",
            "--data-dir",
            data.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let o = moqe(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dir
    };
    let a = run("a", &[]);
    // replay from the snapshot alone
    let snapshot = a.join("config.toml");
    let b = run("b", &["--config", snapshot.to_str().unwrap()]);
    let c = run("c", &["--threads", "2"]);
    let csv = |d: &Path| fs::read_to_string(d.join("metrics.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));
    let parse = |s: String| -> Vec<f64> {
        s.lines().skip(1).flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect()
    };
    for (x, y) in parse(csv(&a)).into_iter().zip(parse(csv(&c))) {
        assert!((x - y).abs() <= 1e-9);
    }
    assert_eq!(
        fs::read_to_string(a.join("checkpoint.json")).unwrap(),
        fs::read_to_string(b.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn cnn_baseline_with_zero_learning_rate_keeps_untrained_accuracy() {
    let data = require_data!();
    let out = tempfile::tempdir().unwrap();
    let o = moqe(&[
        "baseline",
        "cnn",
        "--c",
        "2,2,2,4",
        "--h",
        "4",
        "--lr",
        "0",
        "--epochs",
        "1",
        "--train-subset",
        "20",
        "--data-dir",
        data.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    let text = stdout(&o);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text.contains("parameters: 245 (published 175)"), "{text}");

    let set = moqe::mnist::MnistDataset::load_dir(&data).unwrap();
    let test: Vec<_> = set.test.iter().collect();
    let cfg = moqe::baselines::TinyCnnConfig::new([2, 2, 2, 4], 4).unwrap();
    let untrained = moqe::baselines::TinyCnn::init(cfg, 0).unwrap();
    let acc = moqe::baselines::evaluate_cnn(&untrained, &test).unwrap();
    assert!(text.contains(&format!("test accuracy {:.2}%", 100.0 * acc)), "{text}");
    let metrics = fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    assert!(metrics.lines().nth(1).unwrap().ends_with(",cnn"));
}

#[test]
fn bad_arguments_fail() {
    assert!(!moqe(&["train", "--schedule", "ladder99"]).status.success());
    assert!(!moqe(&["baseline", "mlp"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("checkpoint.json");
    fs::write(&ck, "{\"format\": \"other\"}").unwrap();
    let o = moqe(&["eval", "--checkpoint", ck.to_str().unwrap()]);
    assert!(!o.status.success());
}
