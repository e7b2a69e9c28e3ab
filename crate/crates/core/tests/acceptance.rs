//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hgin_core::checks::{self, CheckResult};
use hgin_core::hypergraph::{
    laplacian, propagation_matrix, spectral_oracle, Activation as HgActivation, HypergraphConfig, HypergraphLayer,
    IncidenceFactors,
};
use hgin_core::io::checkpoint::Checkpoint;
use hgin_core::io::config::RunConfig;
use hgin_core::kernels::Padding;
use hgin_core::masks::{gen_brush_mask, gen_center_mask, hole_ratio, MaskSpec};
use hgin_core::metrics::{l1_percent, l2_percent, psnr, ssim, BUCKETS};
use hgin_core::net::{mask_image, Activation, GatedConv, GatedConvSpec, InpaintModel};
use hgin_core::synth::synth_corpus;
use hgin_core::train::Trainer;
use hgin_core::{ParamStore, Tape, Tensor};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn min_eigenvalue(m: &Tensor) -> f64 {
    let n = m.shape()[0];
    DMatrix::from_row_slice(n, n, m.data()).symmetric_eigen().eigenvalues.min()
}

fn max_asymmetry(m: &Tensor) -> f64 {
    let n = m.shape()[0];
    let d = m.data();
    (0..n * n).map(|k| (d[k] - d[(k % n) * n + k / n]).abs()).fold(0.0, f64::max)
}

fn laplacian_psd() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_asym, mut worst_eig) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let n = rng.gen_range(2..=32);
        let m = rng.gen_range(1..=8);
        let c = rng.gen_range(1..=4);
        let f = IncidenceFactors::from_factors(
            random_tensor(&[n, c], &mut rng, 0.0, 2.0),
            random_tensor(&[c], &mut rng, -1.0, 1.0),
            random_tensor(&[n, m], &mut rng, -1.0, 1.0),
            1e-6,
        )
        .map_err(|e| e.to_string())?;
        let l = laplacian(&f).map_err(|e| e.to_string())?;
        worst_asym = worst_asym.max(max_asymmetry(&l));
        worst_eig = worst_eig.min(min_eigenvalue(&l));
    }
    let elapsed = start.elapsed();
    ensure(worst_asym < 1e-12, || format!("asymmetry {worst_asym:e}"))?;
    ensure(worst_eig >= -1e-8, || format!("min eigenvalue {worst_eig:e}"))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "200 factors, max asymmetry {worst_asym:.1e}, min eigenvalue {worst_eig:.3e}, {elapsed:.2?}"
    ))
}

fn closed_form_propagation() -> Outcome {
    let p = |h: Tensor| propagation_matrix(&IncidenceFactors::from_incidence(h, 1e-6).unwrap()).unwrap();
    let ident = p(Tensor::eye(5));
    ensure(ident == Tensor::eye(5), || format!("H=I gave {ident:?}"))?;
    let uniform = p(Tensor::ones(&[4, 1]));
    let err_u = uniform.data().iter().map(|v| (v - 0.25).abs()).fold(0.0, f64::max);
    ensure(err_u < 1e-12, || format!("uniform edge error {err_u:e}"))?;
    let two = p(Tensor::new(&[2, 1], vec![2.0, 1.0]).unwrap());
    let s2 = 2f64.sqrt();
    let expected = [2.0 / 3.0, s2 / 3.0, s2 / 3.0, 1.0 / 3.0];
    let err_t = two.data().iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err_t < 1e-10, || format!("two-node error {err_t:e}"))?;
    Ok(format!("H=I exact, uniform err {err_u:.1e}, two-node err {err_t:.1e}"))
}

fn random_binary_hypergraph(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Tensor {
    loop {
        let h = Tensor::from_fn(&[n, m], |_| f64::from(u8::from(rng.gen_bool(0.4))));
        let rows_ok = h.data().chunks_exact(m).all(|r| r.iter().any(|&v| v > 0.0));
        let cols_ok = (0..m).all(|e| (0..n).any(|i| h.data()[i * m + e] > 0.0));
        if rows_ok && cols_ok {
            return h;
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (hh, ww) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let n = hh * ww;
        let m = rng.gen_range(1..=6);
        let c = rng.gen_range(1..=4);
        let h = random_binary_hypergraph(&mut rng, n, m);
        let mut store = ParamStore::new();
        let cfg = HypergraphConfig {
            channels: c,
            out_channels: c,
            edges: m,
            embed: 2,
            window: 3,
            epsilon: 1e-6,
        };
        let mut layer = HypergraphLayer::new(&mut store, "hg", cfg, &mut rng).map_err(|e| e.to_string())?;
        layer.activation = HgActivation::Identity;
        *store.value_mut(layer.theta) = Tensor::eye(c);
        let x = random_tensor(&[1, hh, ww, c], &mut rng, -1.0, 1.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = layer
            .forward_with_incidence(&mut tape, &store, xv, std::slice::from_ref(&h))
            .map_err(|e| e.to_string())?;
        let oracle = spectral_oracle(&h, &x.reshape(&[n, c]).unwrap()).map_err(|e| e.to_string())?;
        let err = tape
            .value(y)
            .data()
            .iter()
            .zip(oracle.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 hypergraphs, max deviation {worst:.1e}"))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let results = checks::run_suite(checks::Suite::All).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let failed: Vec<String> = results.iter().filter(|r| !r.passed()).map(CheckResult::summary).collect();
    ensure(failed.is_empty(), || failed.join("; "))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    let worst = results
        .iter()
        .map(|r| format!("{} {:.1e}", r.name, r.report.max_rel_error))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(format!("{} checks in {elapsed:.1?}: {worst}", results.len()))
}

fn zero_gate_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let specs = [
        GatedConvSpec::new(3, 1, 1, 4, 6, Activation::Elu),
        GatedConvSpec::new(5, 2, 1, 3, 4, Activation::LeakyRelu),
        GatedConvSpec::new(3, 1, 4, 5, 5, Activation::None),
    ];
    for spec in specs {
        let mut store = ParamStore::new();
        let gc = GatedConv::new(&mut store, "g", spec, true, &mut rng).map_err(|e| e.to_string())?;
        let (wg, _) = gc.gate.ok_or("missing gate")?;
        store.value_mut(wg).data_mut().fill(0.0);
        let mut tape = Tape::new();
        let x = tape.constant(random_tensor(&[2, 9, 9, spec.c_in], &mut rng, -2.0, 2.0));
        let y = gc.forward(&mut tape, &store, x).map_err(|e| e.to_string())?;
        let wf = tape.param(&store, gc.w_feature);
        let bf = tape.param(&store, gc.b_feature);
        let f = tape
            .conv2d(x, wf, Some(bf), spec.stride, spec.dilation, Padding::Same)
            .map_err(|e| e.to_string())?;
        let phi = match spec.activation {
            Activation::Elu => tape.elu(f),
            Activation::LeakyRelu => tape.leaky_relu(f, hgin_core::net::LEAKY_SLOPE),
            Activation::None => f,
        };
        let expected = tape.value(phi).scale(0.5);
        let same = tape
            .value(y)
            .data()
            .iter()
            .zip(expected.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("{spec:?} differs from 0.5*phi"))?;
    }
    Ok("3 layer specs bitwise equal to 0.5*phi(features)".into())
}

fn mask_protocol() -> Outcome {
    let center = hole_ratio(&gen_center_mask(256).map_err(|e| e.to_string())?);
    ensure(center == 0.25, || format!("center ratio {center}"))?;
    for (b, label) in BUCKETS.iter().enumerate() {
        let lo = 0.1 * (b + 1) as f64;
        let range = (lo, lo + 0.1);
        for seed in 0..100u64 {
            let mask = gen_brush_mask(&MaskSpec::brush(64, range, seed)).map_err(|e| format!("{label} seed {seed}: {e}"))?;
            let r = hole_ratio(&mask);
            ensure(mask.data().iter().all(|&v| v == 0.0 || v == 1.0), || "non-binary mask".into())?;
            ensure((range.0..=range.1).contains(&r), || format!("{label} seed {seed}: ratio {r}"))?;
        }
    }
    Ok("center 0.25 exactly; 5 buckets x 100 seeds in range".into())
}

fn toy_config(out_dir: &Path) -> RunConfig {
    RunConfig::parse_str(&format!(
        "seed = 7
image_size = 32
base_channels = 8
batch_size = 8
synth_count = 200
lr = 1e-3
iterations = 500
checkpoint_every = 250
out_dir = {}
",
        out_dir.display()
    ))
    .expect("toy config")
}

fn hash_file(path: &Path) -> Result<u64, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    Ok(h.finish())
}

struct ToyRuns {
    dir: tempfile::TempDir,
    hole_trace: Vec<f64>,
    model: InpaintModel,
    elapsed: Duration,
}

fn run_to(cfg: RunConfig, dest: &Path) -> Result<Trainer, String> {
    let work = Path::new(&cfg.out_dir).to_path_buf();
    let mut t = Trainer::from_config(cfg).map_err(|e| e.to_string())?;
    t.run().map_err(|e| e.to_string())?;
    fs::rename(&work, dest).map_err(|e| e.to_string())?;
    Ok(t)
}

fn toy_runs() -> Result<ToyRuns, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let work = dir.path().join("run");
    let start = Instant::now();
    let t = run_to(toy_config(&work), &dir.path().join("a"))?;
    let elapsed = start.elapsed();
    let csv = fs::read_to_string(dir.path().join("a/metrics.csv")).map_err(|e| e.to_string())?;
    let hole_trace = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).and_then(|v| v.parse().ok()).ok_or("bad csv row"))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(ToyRuns {
        hole_trace,
        model: t.model,
        dir,
        elapsed,
    })
}

fn toy_training(runs: &ToyRuns) -> Outcome {
    let trace = &runs.hole_trace;
    ensure(trace.len() == 500, || format!("{} steps recorded", trace.len()))?;
    let initial = trace[..10].iter().sum::<f64>() / 10.0;
    let last = trace[490..].iter().sum::<f64>() / 10.0;
    let drop = 1.0 - last / initial;

    let held_out = synth_corpus(20, 32, 424_242);
    let (mut base, mut model) = (0.0, 0.0);
    for (i, img) in held_out.iter().enumerate() {
        let mask = gen_brush_mask(&MaskSpec::brush(32, (0.1, 0.2), 90_000 + i as u64)).map_err(|e| e.to_string())?;
        let img = img.reshape(&[1, 32, 32, 3]).unwrap();
        let mask = mask.reshape(&[1, 32, 32, 1]).unwrap();
        let (_, _, comp) = runs.model.inpaint(&img, &mask).map_err(|e| e.to_string())?;
        base += psnr(&mask_image(&img, &mask).unwrap(), &img, 1.0).unwrap() / 20.0;
        model += psnr(&comp, &img, 1.0).unwrap() / 20.0;
    }
    let detail = format!(
        "L_hole {initial:.5} -> {last:.5} (drop {:.1}%), held-out PSNR {model:.2} dB vs zero-fill {base:.2} dB (+{:.2}), {:.1?}",
        100.0 * drop,
        model - base,
        runs.elapsed
    );
    ensure(drop >= 0.5, || detail.clone())?;
    ensure(model - base >= 3.0, || detail.clone())?;
    ensure(runs.elapsed < Duration::from_secs(1800), || detail.clone())?;
    Ok(detail)
}

fn ablations(runs: &ToyRuns) -> Outcome {
    let mut done = Vec::new();
    for (flag, name) in [("use_hypergraph = false", "no hypergraph"), ("disc_gated = false", "plain discriminator")] {
        let mut cfg = toy_config(&runs.dir.path().join("ablation"));
        let mut text = cfg.to_text();
        text.push_str(flag);
        text.push_str("\niterations = 20\ncheckpoint_every = 0\n");
        cfg = RunConfig::parse_str(&text).map_err(|e| e.to_string())?;
        let mut t = Trainer::from_config(cfg).map_err(|e| format!("{name}: {e}"))?;
        let m = t.run().map_err(|e| format!("{name}: {e}"))?;
        ensure(m.len() == 20, || format!("{name}: {} steps", m.len()))?;
        let hg_params = t.model.gen_params.iter().filter(|p| p.name.contains(".hg.")).count();
        let gates = t.model.disc_params.iter().filter(|p| p.name.contains("gate")).count();
        done.push(format!("{name}: 20 steps, {hg_params} hypergraph params, {gates} disc gate params"));
        fs::remove_dir_all(runs.dir.path().join("ablation")).map_err(|e| e.to_string())?;
    }
    Ok(done.join("; "))
}

fn determinism_and_resume(runs: &ToyRuns) -> Outcome {
    let root = runs.dir.path();
    let work = root.join("run");
    run_to(toy_config(&work), &root.join("b"))?;
    let (a, b) = (root.join("a"), root.join("b"));
    let csv_a = fs::read(a.join("metrics.csv")).map_err(|e| e.to_string())?;
    ensure(csv_a == fs::read(b.join("metrics.csv")).map_err(|e| e.to_string())?, || {
        "metrics CSV differs between identical runs".into()
    })?;
    for name in ["ckpt_000250.hgin", "final.hgin"] {
        let (ha, hb) = (hash_file(&a.join(name))?, hash_file(&b.join(name))?);
        ensure(ha == hb, || format!("{name} hash {ha:016x} vs {hb:016x}"))?;
    }

    let ck = Checkpoint::load(a.join("ckpt_000250.hgin")).map_err(|e| e.to_string())?;
    ensure(ck.state.iteration == 250, || format!("checkpoint at {}", ck.state.iteration))?;
    let cfg = ck.config().map_err(|e| e.to_string())?;
    let images = Trainer::corpus(&cfg).map_err(|e| e.to_string())?;
    let mut resumed = Trainer::from_checkpoint(&ck, images).map_err(|e| e.to_string())?;
    resumed.run().map_err(|e| e.to_string())?;
    fs::rename(&work, root.join("c")).map_err(|e| e.to_string())?;
    let tail_a: Vec<String> = String::from_utf8_lossy(&csv_a).lines().skip(251).map(String::from).collect();
    let csv_c = fs::read_to_string(root.join("c/metrics.csv")).map_err(|e| e.to_string())?;
    let tail_c: Vec<String> = csv_c.lines().skip(1).map(String::from).collect();
    ensure(tail_a.len() == 250 && tail_a == tail_c, || {
        format!("resumed trace differs ({} vs {} rows)", tail_c.len(), tail_a.len())
    })?;
    let (ha, hc) = (hash_file(&a.join("final.hgin"))?, hash_file(&root.join("c/final.hgin"))?);
    ensure(ha == hc, || format!("resumed final checkpoint hash {hc:016x} vs {ha:016x}"))?;
    Ok(format!(
        "identical CSV and checkpoints (final {ha:016x}); resume at 250 reproduces steps 251-500"
    ))
}

fn metric_goldens() -> Outcome {
    let a = Tensor::from_fn(&[16, 16, 3], |i| ((i * 7) % 11) as f64 / 20.0);
    let b = a.map(|v| v + 0.1);
    let p = psnr(&a, &b, 1.0).map_err(|e| e.to_string())?;
    ensure((p - 20.0).abs() <= 1e-9, || format!("PSNR {p}"))?;
    let s = ssim(&a, &a).map_err(|e| e.to_string())?;
    ensure(s == 1.0, || format!("SSIM(x,x) = {s}"))?;
    let u = Tensor::full(&[16, 16, 3], 0.25);
    let v = Tensor::full(&[16, 16, 3], 0.3);
    let l1 = l1_percent(&u, &v).map_err(|e| e.to_string())?;
    let l2 = l2_percent(&u, &v).map_err(|e| e.to_string())?;
    ensure((l1 - 5.0).abs() <= 1e-12, || format!("L1 {l1}"))?;
    ensure((l2 - 0.25).abs() <= 1e-12, || format!("L2 {l2}"))?;
    Ok(format!("PSNR {p:.12}, SSIM {s}, L1 {l1:.12}%, L2 {l2:.12}%"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} [{n:>2}] {name}: {detail}");
        results.push((n, name, outcome));
    };
    record(1, "laplacian PSD", &laplacian_psd);
    record(2, "closed-form propagation", &closed_form_propagation);
    record(3, "oracle equivalence", &oracle_equivalence);
    record(4, "gradient suite", &gradient_suite);
    record(5, "zero-gate identity", &zero_gate_identity);
    record(6, "mask protocol", &mask_protocol);
    match toy_runs() {
        Ok(runs) => {
            record(7, "toy training run", &|| toy_training(&runs));
            record(8, "ablation toggles", &|| ablations(&runs));
            record(9, "determinism and resume", &|| determinism_and_resume(&runs));
        }
        Err(e) => {
            for (n, name) in [(7, "toy training run"), (8, "ablation toggles"), (9, "determinism and resume")] {
                record(n, name, &|| Err(format!("toy run failed: {e}")));
            }
        }
    }
    record(10, "metric goldens", &metric_goldens);
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
