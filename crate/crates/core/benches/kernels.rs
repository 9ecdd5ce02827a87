//! Kernel timings on a single-thread pool versus the default pool.
//!
//! `cargo bench -p ircgan` compares the two pools; building with
//! `--no-default-features` times the sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ircgan::augment::{apply_affine, register, synthesize_dataset, AffineTransform, Interp, SynthConfig};
use ircgan::nn::{train_with_validation, NetSpec, TrainConfig, TrainState};
use ircgan::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let one = ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f32>::uniform(&[4, 16, 32, 32], -1.0, 1.0, &mut rng);
    let w = Tensor::<f32>::uniform(&[32, 16, 4, 4], -0.1, 0.1, &mut rng);
    let mut group = c.benchmark_group("conv2d 4x16x32x32 -> 32");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let mut g = Graph::new();
                    let (xv, wv) = (g.leaf(&x), g.param(&w));
                    g.conv2d(xv, wv, 2, 1).unwrap()
                })
            })
        });
        group.bench_function(BenchmarkId::new("forward+backward", name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let mut g = Graph::new();
                    let (xv, wv) = (g.param(&x), g.param(&w));
                    let y = g.conv2d(xv, wv, 2, 1).unwrap();
                    let loss = g.mean(y);
                    g.backward(loss).unwrap();
                    g.grad(wv).map(|d| d[0])
                })
            })
        });
    }
    group.finish();
}

fn train_epoch(c: &mut Criterion) {
    let data = synthesize_dataset(&SynthConfig::default(), 5).unwrap();
    let spec = NetSpec::square(5, 32, 16);
    let cfg = TrainConfig { epochs: 1, checkpoint_every: 1000, ..TrainConfig::default() };
    let mut group = c.benchmark_group("train epoch 4x32x32");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            b.iter(|| {
                pool.install(|| {
                    let mut st = TrainState::new(&spec, &cfg).unwrap();
                    train_with_validation(&mut st, &data[..4], &data[4..], &cfg).unwrap().best.val_l1
                })
            })
        });
    }
    group.finish();
}

fn registration(c: &mut Criterion) {
    let a = synthesize_dataset(&SynthConfig { size: 64, ..SynthConfig::default() }, 1).unwrap().remove(0).x;
    let t = AffineTransform::about_center(32.0, 32.0, 6.0, 1.05, 2.0, -1.5).unwrap();
    let b_img = apply_affine(&a, &t, Interp::Bilinear).unwrap();
    let mut group = c.benchmark_group("register 64x64");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| register(&a, &b_img).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, conv, train_epoch, registration);
criterion_main!(benches);
