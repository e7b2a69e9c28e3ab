//! Finite-difference gradient suites for the trainable components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};
use crate::hypergraph::{HypergraphConfig, HypergraphLayer};
use crate::losses::{self, FeatureExtractor, GanLoss};
use crate::net::{Activation, Discriminator, GatedConv, GatedConvSpec, Generator, MaskVars, NetworkConfig};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const COMPONENT_THRESHOLD: f64 = 1e-4;
pub const GENERATOR_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub threshold: f64,
    pub report: GradCheckReport,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < self.threshold
    }

    pub fn summary(&self) -> String {
        let r = &self.report;
        format!(
            "{} {}: max rel error {:.3e} (threshold {:.0e}, {} coords, worst {}[{}] analytic {:.6e} numeric {:.6e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            r.max_rel_error,
            self.threshold,
            r.coords_checked,
            r.worst_param,
            r.worst_index,
            r.analytic,
            r.numeric
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Hypergraph,
    Gated,
    Losses,
    Generator,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hypergraph" => Ok(Suite::Hypergraph),
            "gated" => Ok(Suite::Gated),
            "losses" => Ok(Suite::Losses),
            "generator" => Ok(Suite::Generator),
            "all" => Ok(Suite::All),
            _ => Err(Error::InvalidArgument(format!("unknown gradient suite {s:?}"))),
        }
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// `Σ y ⊙ r` for a fixed random `r`, a smooth scalar probe of `y`.
fn probe(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = tape.constant(random(tape.shape(y), &mut rng, -1.0, 1.0));
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

fn component_opts() -> GradCheckOptions {
    GradCheckOptions {
        epsilon: 1e-6,
        max_coords_per_param: None,
    }
}

fn result(name: &str, threshold: f64, report: GradCheckReport) -> CheckResult {
    CheckResult {
        name: name.into(),
        threshold,
        report,
    }
}

/// Hypergraph layer on a 1×4×4×3 input with 4 hyperedges and embedding width 2;
/// covers Ψ, Λ, Ω, Θ and the input.
pub fn hypergraph_check() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let cfg = HypergraphConfig {
        channels: 3,
        out_channels: 3,
        edges: 4,
        embed: 2,
        window: 3,
        epsilon: 1e-6,
    };
    let layer = HypergraphLayer::new(&mut store, "hg", cfg, &mut rng)?;
    let x = store.add("input", random(&[1, 4, 4, 3], &mut rng, -1.0, 1.0))?;
    let report = finite_diff_check(&store, &component_opts(), |tape, s| {
        let xv = tape.param(s, x);
        let y = layer.forward(tape, s, xv)?;
        probe(tape, y, 12)
    })?;
    Ok(result("hypergraph layer", COMPONENT_THRESHOLD, report))
}

/// Gated convolution on a 1×8×8×4 input.
pub fn gated_check() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store = ParamStore::new();
    let spec = GatedConvSpec::new(3, 1, 2, 4, 5, Activation::Elu);
    let gc = GatedConv::new(&mut store, "gc", spec, true, &mut rng)?;
    let x = store.add("input", random(&[1, 8, 8, 4], &mut rng, -1.0, 1.0))?;
    let report = finite_diff_check(&store, &component_opts(), |tape, s| {
        let xv = tape.param(s, x);
        let y = gc.forward(tape, s, xv)?;
        probe(tape, y, 22)
    })?;
    Ok(result("gated convolution", COMPONENT_THRESHOLD, report))
}

fn test_mask(size: usize) -> Tensor {
    Tensor::from_fn(&[1, size, size, 1], |i| {
        let (y, x) = (i / size, i % size);
        f64::from(u8::from((2..6).contains(&y) && (1..5).contains(&x)))
    })
}

/// Each of the five generator loss terms with respect to its prediction inputs.
pub fn loss_checks() -> Result<Vec<CheckResult>> {
    const S: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let gt = random(&[1, S, S, 3], &mut rng, 0.0, 1.0);
    let mask = test_mask(S);
    let mut store = ParamStore::new();
    let coarse = store.add("coarse", random(&[1, S, S, 3], &mut rng, 0.0, 1.0))?;
    let refine = store.add("refine", random(&[1, S, S, 3], &mut rng, 0.0, 1.0))?;
    let opts = component_opts();
    let content = |tape: &mut Tape, s: &ParamStore, hole: bool| -> Result<Var> {
        let c = tape.param(s, coarse);
        let r = tape.param(s, refine);
        let g = tape.constant(gt.clone());
        let mv = MaskVars::new(tape, &mask)?;
        let (h, v) = losses::content_loss(tape, c, r, g, &mv)?;
        Ok(if hole { h } else { v })
    };
    let mut out = vec![
        result("hole loss", COMPONENT_THRESHOLD, finite_diff_check(&store, &opts, |t, s| content(t, s, true))?),
        result("valid loss", COMPONENT_THRESHOLD, finite_diff_check(&store, &opts, |t, s| content(t, s, false))?),
    ];

    let mut disc_store = ParamStore::new();
    let mut net = NetworkConfig::new(4, S);
    net.disc_layers.truncate(2);
    let disc = Discriminator::new(&mut disc_store, &net, &mut rng)?;
    let mut fake_store = ParamStore::new();
    let fake = fake_store.add("fake", random(&[1, S, S, 3], &mut rng, 0.0, 1.0))?;
    let report = finite_diff_check(&fake_store, &opts, |tape, s| {
        let f = tape.param(s, fake);
        let m = tape.constant(mask.clone());
        let logits = disc.forward(tape, &disc_store, f, m)?;
        losses::gan_loss_g(tape, logits, GanLoss::Vanilla)
    })?;
    out.push(result("adversarial loss", COMPONENT_THRESHOLD, report));

    let extractor = FeatureExtractor::new(32);
    let report = finite_diff_check(&store, &opts, |tape, s| {
        let r = tape.param(s, refine);
        let g = tape.constant(gt.clone());
        let mv = MaskVars::new(tape, &mask)?;
        losses::perceptual_loss(tape, r, g, &mv, &extractor)
    })?;
    out.push(result("perceptual loss", COMPONENT_THRESHOLD, report));

    let report = finite_diff_check(&store, &opts, |tape, s| {
        let r = tape.param(s, refine);
        let g = tape.constant(gt.clone());
        losses::edge_loss(tape, r, g)
    })?;
    out.push(result("edge loss", COMPONENT_THRESHOLD, report));
    Ok(out)
}

/// Full coarse-to-refine generator with the hypergraph layer on 16×16 inputs.
pub fn generator_check() -> Result<CheckResult> {
    const S: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let net = NetworkConfig::new(4, S);
    let mut store = ParamStore::new();
    let generator = Generator::new(&mut store, &net, &mut rng)?;
    let image = random(&[1, S, S, 3], &mut rng, 0.0, 1.0);
    let mask = Tensor::from_fn(&[1, S, S, 1], |i| f64::from(u8::from((4..10).contains(&(i / S)) && (5..12).contains(&(i % S)))));
    let input = crate::net::mask_image(&image, &mask)?;
    let opts = GradCheckOptions {
        epsilon: 1e-6,
        max_coords_per_param: Some(4),
    };
    let report = finite_diff_check(&store, &opts, |tape, s| {
        let x = tape.constant(input.clone());
        let mv = MaskVars::new(tape, &mask)?;
        let out = generator.forward(tape, s, x, &mv)?;
        let a = probe(tape, out.refine, 42)?;
        let b = probe(tape, out.coarse, 43)?;
        tape.add(a, b)
    })?;
    Ok(result("generator 16x16", GENERATOR_THRESHOLD, report))
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Hypergraph | Suite::All) {
        out.push(hypergraph_check()?);
    }
    if matches!(suite, Suite::Gated | Suite::All) {
        out.push(gated_check()?);
    }
    if matches!(suite, Suite::Losses | Suite::All) {
        out.extend(loss_checks()?);
    }
    if matches!(suite, Suite::Generator | Suite::All) {
        out.push(generator_check()?);
    }
    Ok(out)
}
