//! Run twice to compare backends:
//! `cargo bench -p hgin-core` and `cargo bench -p hgin-core --no-default-features`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hgin_core::io::config::RunConfig;
use hgin_core::kernels::{conv2d_forward, ConvGeometry, Padding};
use hgin_core::masks::{gen_brush_mask, MaskSpec};
use hgin_core::net::{InpaintModel, NetworkConfig};
use hgin_core::synth::synth_corpus;
use hgin_core::train::Trainer;
use hgin_core::Tensor;

const MODE: &str = if cfg!(feature = "parallel") { "rayon" } else { "sequential" };

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn conv(c: &mut Criterion) {
    let g = ConvGeometry::new(&[4, 32, 32, 16], &[3, 3, 16, 32], 1, 1, Padding::Same).unwrap();
    let x = random(4 * 32 * 32 * 16, 1);
    let w = random(3 * 3 * 16 * 32, 2);
    c.bench_function(&format!("conv2d_4x32x32x16_k3_{MODE}"), |b| {
        b.iter(|| conv2d_forward(black_box(&x), black_box(&w), None, &g))
    });
}

fn inpaint(c: &mut Criterion) {
    let model = InpaintModel::new(NetworkConfig::new(8, 32), 3).unwrap();
    let images = synth_corpus(4, 32, 5);
    let mut img = Vec::new();
    let mut mask = Vec::new();
    for (i, im) in images.iter().enumerate() {
        img.extend_from_slice(im.data());
        let m = gen_brush_mask(&MaskSpec::brush(32, (0.1, 0.2), i as u64)).unwrap();
        mask.extend_from_slice(m.data());
    }
    let img = Tensor::new(&[4, 32, 32, 3], img).unwrap();
    let mask = Tensor::new(&[4, 32, 32, 1], mask).unwrap();
    c.bench_function(&format!("inpaint_batch4_32px_{MODE}"), |b| {
        b.iter(|| model.inpaint(black_box(&img), black_box(&mask)).unwrap())
    });
}

fn train_step(c: &mut Criterion) {
    let cfg = RunConfig::parse_str("image_size = 32\nbase_channels = 8\nbatch_size = 4\nsynth_count = 16\n").unwrap();
    let mut trainer = Trainer::from_config(cfg).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function(format!("step_batch4_32px_{MODE}"), |b| b.iter(|| trainer.step().unwrap()));
    group.finish();
}

criterion_group!(benches, conv, inpaint, train_step);
criterion_main!(benches);
