use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use moqe::ansatz::{elementary_real, ExpertCircuit};
use moqe::autodiff::{adjoint_weighted, loss_and_grad_batch, GradMethod};
use moqe::baselines::{QuadraticClassifier, TinyCnn, TinyCnnConfig};
use moqe::encoding::{encode_real, NUM_QUBITS};
use moqe::moqe::{init_model, LabeledImage};
use moqe::state::apply_real_2q;
use moqe_bench::{angles, samples};

fn gate_kernels(c: &mut Criterion) {
    let img = &samples(1, 1)[0];
    let amps = encode_real(&img.padded().unwrap());
    let m = elementary_real(&[0.3, -0.7, 1.1, 0.2]);
    let mut g = c.benchmark_group("apply_2q");
    for (a, b) in [(0, 1), (8, 9), (0, 9)] {
        g.bench_function(format!("qubits {a},{b}"), |bch| {
            bch.iter_batched_ref(|| amps.clone(), |v| apply_real_2q(v, NUM_QUBITS, a, b, &m), BatchSize::SmallInput)
        });
    }
    g.finish();
}

fn expert(c: &mut Criterion) {
    let circuit = ExpertCircuit::default();
    let params = angles(circuit.param_count(), 2);
    let img = &samples(1, 3)[0];
    let amps = encode_real(&img.padded().unwrap());
    let ones = [1.0; NUM_QUBITS];
    c.bench_function("expert forward (63 gates)", |b| {
        b.iter(|| circuit.z_values_real(black_box(&params), &amps).unwrap())
    });
    c.bench_function("expert adjoint gradient", |b| {
        b.iter(|| adjoint_weighted(&circuit, black_box(&params), &amps, &ones).unwrap())
    });

    let mut model = init_model(4, 0).unwrap();
    let data = samples(64, 4);
    let refs: Vec<_> = data.iter().collect();
    model.calibrate_normalizer(&refs).unwrap();
    c.bench_function("batch of 4, 4 experts, loss and gradient", |b| {
        b.iter(|| loss_and_grad_batch(&model, &refs[..4], GradMethod::Adjoint).unwrap())
    });
}

fn baselines(c: &mut Criterion) {
    let img = &samples(1, 5)[0];
    let pixels = img.padded().unwrap().interior();
    let quad = QuadraticClassifier::from_params(angles(moqe::baselines::QUADRATIC_PARAMS, 6)).unwrap();
    c.bench_function("quad_output", |b| b.iter(|| quad.output(black_box(&pixels))));

    let cnn = TinyCnn::init(TinyCnnConfig::default(), 7).unwrap();
    let padded = img.padded().unwrap();
    c.bench_function("cnn_forward (8,8,8,8,h=4)", |b| b.iter(|| cnn.forward(black_box(&padded))));
}

criterion_group!(benches, gate_kernels, expert, baselines);
criterion_main!(benches);
