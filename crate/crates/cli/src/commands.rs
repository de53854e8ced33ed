use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use moqe::ansatz::{ExpertCircuit, GateSchedule};
use moqe::autodiff::{adjoint_weighted, grad_finite_difference_weighted, grad_parameter_shift_weighted};
use moqe::baselines::{
    published_param_count, train_cnn, train_quadratic, BaselineConfig, QuadraticClassifier, TinyCnnConfig,
};
use moqe::encoding::{encode_real, NUM_QUBITS};
use moqe::metrics::{EpochRecord, Metrics};
use moqe::mnist::{make_split, verify_dir, DatasetSplit, MnistDataset, RawSample, PIXELS};
use moqe::moqe::{
    calibration_sample, evaluate, output_histogram, train, Checkpoint, MoqeModel, TrainConfig,
    DEFAULT_INIT_RANGE,
};
use moqe::optim::AdamConfig;
use moqe::rng;
use rand::Rng;

use crate::config::RunConfig;

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn print_epoch(r: &EpochRecord) {
    let test = r.test_acc.map(pct).unwrap_or_else(|| "-".into());
    eprintln!(
        "epoch {:>3}  running {}  test {}  loss {:.4}  {:.1}s",
        r.epoch,
        pct(r.running_train_acc),
        test,
        r.mean_loss,
        r.seconds
    );
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.save(&dir)?;
    Ok(dir)
}

/// Returns `true` when all four files pass.
pub fn verify_data(dir: &Path) -> bool {
    let checks = verify_dir(dir);
    let mut counts = [0usize; 2];
    for c in &checks {
        match &c.result {
            Ok(n) => {
                println!("ok    {} ({n} records)", c.path.display());
                if c.file.stem().contains("images") {
                    counts[usize::from(c.file.stem().starts_with("t10k"))] = *n;
                }
            }
            Err(e) => println!("FAIL  {}: {e}", c.path.display()),
        }
    }
    let ok = checks.iter().all(|c| c.result.is_ok());
    if ok {
        println!("pass: {} train / {} test", counts[0], counts[1]);
    } else {
        println!("fail: dataset in {} did not verify", dir.display());
    }
    ok
}

struct Data {
    set: MnistDataset,
    split: DatasetSplit,
}

impl Data {
    fn load(dir: &Path, seed: u64) -> Result<Self> {
        let bad: Vec<String> = verify_dir(dir)
            .into_iter()
            .filter_map(|c| c.result.err().map(|e| format!("{}: {e}", c.path.display())))
            .collect();
        ensure!(bad.is_empty(), "dataset failed verification:\n  {}", bad.join("\n  "));
        let set = MnistDataset::load_dir(dir)?;
        let split = make_split(set.train.len(), set.test.len(), seed)?;
        Ok(Self { set, split })
    }

    fn train(&self, n: usize) -> Vec<&RawSample> {
        self.split.train_subset(n).iter().map(|&i| &self.set.train[i]).collect()
    }

    fn test(&self) -> Vec<&RawSample> {
        self.split.test.iter().map(|&i| &self.set.test[i]).collect()
    }
}

fn circuit_of(cfg: &RunConfig) -> Result<ExpertCircuit> {
    Ok(ExpertCircuit::new(GateSchedule::new(cfg.schedule, cfg.reversed), cfg.layers)?)
}

fn write_metrics(dir: &Path, metrics: &Metrics, experts: usize) -> Result<()> {
    fs::write(dir.join("metrics.csv"), metrics.to_csv())?;
    fs::write(dir.join("compute.csv"), metrics.compute_csv(experts))?;
    fs::write(dir.join("timing.csv"), metrics.timing_csv())?;
    Ok(())
}

pub fn train_cmd(mut cfg: RunConfig) -> Result<()> {
    let epochs = *cfg.epochs.get_or_insert(1);
    let lr = *cfg.lr.get_or_insert(AdamConfig::default().learning_rate);
    ensure!(cfg.experts >= 1, "--experts must be at least 1");
    let data = Data::load(&cfg.data_dir, cfg.seed)?;
    let train_set = data.train(cfg.train_subset);
    let test_set = data.test();
    let dir = prepare_out_dir(&cfg)?;

    let mut model = MoqeModel::init(circuit_of(&cfg)?, cfg.experts, cfg.seed, DEFAULT_INIT_RANGE)?;
    model.calibrate_normalizer(&calibration_sample(&train_set))?;
    eprintln!(
        "{} experts x {} params, {} train / {} test images, nu = {:.6}",
        cfg.experts,
        model.circuit().param_count(),
        train_set.len(),
        test_set.len(),
        model.nu().unwrap_or(f64::NAN)
    );

    let metrics = if epochs == 0 {
        Metrics::default()
    } else {
        let tc = TrainConfig {
            batch_size: cfg.batch_size,
            epochs,
            adam: AdamConfig {
                learning_rate: lr,
                ..Default::default()
            },
            seed: cfg.seed,
            train_subset_size: cfg.train_subset,
            gradient_method: cfg.grad,
            skip_final_train_eval: false,
        };
        train(&mut model, &train_set, &test_set, &tc, print_epoch)?
    };

    Checkpoint::from_model(&model, epochs).save(&dir.join("checkpoint.json"))?;
    write_metrics(&dir, &metrics, cfg.experts)?;
    fs::write(dir.join("histograms.csv"), output_histogram(&model, &test_set)?.to_csv())?;

    if let Some(acc) = metrics.final_train_accuracy {
        println!("train accuracy {}", pct(acc));
    }
    if let Some(acc) = metrics.last().and_then(|r| r.test_acc) {
        println!("test accuracy {}", pct(acc));
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn eval_cmd(checkpoint: &Path, cfg: &RunConfig, out_dir: Option<PathBuf>) -> Result<()> {
    let model = Checkpoint::load(checkpoint)?.to_model()?;
    let data = Data::load(&cfg.data_dir, model.seed())?;
    let test_set = data.test();
    if cfg.train_subset > 0 {
        let train_set = data.train(cfg.train_subset);
        println!("train accuracy {} ({} images)", pct(evaluate(&model, &train_set)?), train_set.len());
    }
    println!("test accuracy {} ({} images)", pct(evaluate(&model, &test_set)?), test_set.len());

    let hist = output_histogram(&model, &test_set)?;
    let dir = out_dir
        .or_else(|| checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("histograms.csv"), hist.to_csv())?;
    println!("wrote {}", dir.join("histograms.csv").display());
    Ok(())
}

fn synthetic_sample(r: &mut impl Rng) -> RawSample {
    let mut px = [0u8; PIXELS];
    for p in px.iter_mut() {
        if r.gen_bool(0.2) {
            *p = r.gen();
        }
    }
    px[r.gen_range(0..PIXELS)] = 255;
    RawSample::new(px, r.gen_range(0..10)).expect("digit in range")
}

pub struct GradcheckOptions {
    pub configs: usize,
    pub inject_sign_error: bool,
}

pub const FD_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const SHIFT_TOL: f64 = 1e-10;
pub const FD_TOL: f64 = 1e-6;

/// Returns `true` when every tolerance holds.
pub fn gradcheck_cmd(cfg: &RunConfig, opts: &GradcheckOptions) -> Result<bool> {
    ensure!(opts.configs >= 1, "--configs must be at least 1");
    let circuit = circuit_of(cfg)?;
    let mut r = rng::stream(cfg.seed, rng::STREAM_INIT);
    let images: Vec<RawSample> = match MnistDataset::load_dir(&cfg.data_dir) {
        Ok(set) => {
            println!("inputs: random MNIST test images from {}", cfg.data_dir.display());
            (0..opts.configs)
                .map(|_| set.test[r.gen_range(0..set.test.len())].clone())
                .collect()
        }
        Err(_) => {
            println!("inputs: synthetic images (no dataset in {})", cfg.data_dir.display());
            (0..opts.configs).map(|_| synthetic_sample(&mut r)).collect()
        }
    };

    let ones = [1.0; NUM_QUBITS];
    let mut shift_dev = 0.0f64;
    let mut fd_dev = [0.0f64; FD_STEPS.len()];
    for img in &images {
        let params: Vec<f64> = (0..circuit.param_count())
            .map(|_| r.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let input = encode_real(&moqe::moqe::LabeledImage::padded(img)?);
        let (_, mut adj) = adjoint_weighted(&circuit, &params, &input, &ones)?;
        if opts.inject_sign_error {
            adj.iter_mut().for_each(|g| *g = -*g);
        }
        let (_, shift) = grad_parameter_shift_weighted(&circuit, &params, &input, &ones)?;
        shift_dev = shift_dev.max(adj.max_abs_diff(&shift));
        for (dev, &h) in fd_dev.iter_mut().zip(&FD_STEPS) {
            let (_, fd) = grad_finite_difference_weighted(&circuit, &params, &input, &ones, h)?;
            *dev = dev.max(adj.max_abs_diff(&fd));
        }
    }

    println!(
        "{} configs, {} x {} layers, {} params each",
        images.len(),
        cfg.schedule,
        cfg.layers,
        circuit.param_count()
    );
    let shift_ok = shift_dev < SHIFT_TOL;
    println!(
        "max |adjoint - param-shift|       = {shift_dev:.3e}  (tol {SHIFT_TOL:e})  {}",
        if shift_ok { "ok" } else { "FAIL" }
    );
    let mut fd_ok = true;
    for (dev, h) in fd_dev.iter().zip(FD_STEPS) {
        // the tolerance is stated for the 1e-5 step; the others are reported
        if h == 1e-5 {
            fd_ok = *dev < FD_TOL;
            println!(
                "max |adjoint - finite-diff({h:e})| = {dev:.3e}  (tol {FD_TOL:e})  {}",
                if fd_ok { "ok" } else { "FAIL" }
            );
        } else {
            println!("max |adjoint - finite-diff({h:e})| = {dev:.3e}");
        }
    }
    Ok(shift_ok && fd_ok)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineKind {
    Quad,
    Cnn,
}

pub fn baseline_cmd(kind: BaselineKind, mut cfg: RunConfig) -> Result<()> {
    let epochs = *cfg.epochs.get_or_insert(5);
    let lr = *cfg.lr.get_or_insert(match kind {
        BaselineKind::Quad => 1e-5,
        BaselineKind::Cnn => 3e-3,
    });
    if epochs == 0 {
        bail!("baselines need at least one epoch");
    }
    let data = Data::load(&cfg.data_dir, cfg.seed)?;
    let train_set = data.train(cfg.train_subset);
    let test_set = data.test();
    let dir = prepare_out_dir(&cfg)?;
    let bc = BaselineConfig {
        batch_size: cfg.batch_size,
        epochs,
        adam: AdamConfig {
            learning_rate: lr,
            ..Default::default()
        },
        seed: cfg.seed,
    };

    let (name, metrics) = match kind {
        BaselineKind::Quad => {
            let ours = QuadraticClassifier::zeros().param_count();
            println!("parameters: {ours} (published 308505)");
            let (_, m) = train_quadratic(&train_set, &test_set, &bc, print_epoch)?;
            ("quad", m)
        }
        BaselineKind::Cnn => {
            let cnn = TinyCnnConfig::new(cfg.channels, cfg.hidden)?;
            let published = published_param_count(&cnn).map_or_else(|| "n/a".to_string(), |n| n.to_string());
            println!("parameters: {} (published {published})", moqe::baselines::count_params(&cnn));
            let (_, m) = train_cnn(&train_set, &test_set, cnn, &bc, print_epoch)?;
            ("cnn", m)
        }
    };
    fs::write(dir.join("metrics.csv"), metrics.to_csv_with_model(name))?;
    fs::write(dir.join("timing.csv"), metrics.timing_csv())?;
    if let Some(acc) = metrics.final_train_accuracy {
        println!("train accuracy {}", pct(acc));
    }
    if let Some(acc) = metrics.last().and_then(|r| r.test_acc) {
        println!("test accuracy {}", pct(acc));
    }
    println!("wrote {}", dir.display());
    Ok(())
}
