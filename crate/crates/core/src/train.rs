//! Adversarial training loop.
//!
//! Each iteration draws a batch from a per-epoch shuffle, generates one mask per
//! item, updates the discriminator on `(ground truth, detached prediction)` and
//! then the generator against the updated discriminator. Items are evaluated on
//! independent tapes in parallel and their gradients summed in item order.
//!
//! All randomness is a pure function of `(seed, iteration, item)`, so a run
//! resumed from a checkpoint continues exactly as the uninterrupted run would.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::checkpoint::{Checkpoint, TrainingState};
use crate::io::config::RunConfig;
use crate::io::pnm;
use crate::losses::{self, FeatureExtractor, LossBreakdown, LossTerms};
use crate::masks::{self, MaskKind, MaskSpec};
use crate::net::{mask_image, InpaintModel, MaskVars};
use crate::optim::{adam_step, AdamState};
use crate::par;
use crate::params::ParamStore;
use crate::schedule::schedule_step;
use crate::synth;
use crate::tape::{Grads, Tape, Var};
use crate::tensor::Tensor;

pub const METRICS_HEADER: &str =
    "iteration,hole,valid,adv,perceptual,edge,total,d_loss,gen_grad_norm,disc_grad_norm,lr,hole_ratio";

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    /// 1-based index of the completed step.
    pub iteration: u64,
    pub losses: LossBreakdown,
    pub d_loss: f64,
    pub gen_grad_norm: f64,
    pub disc_grad_norm: f64,
    pub lr: f64,
    /// Mean hole ratio of the batch.
    pub hole_ratio: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.iteration,
            l.hole,
            l.valid,
            l.adv,
            l.perceptual,
            l.edge,
            l.total,
            self.d_loss,
            self.gen_grad_norm,
            self.disc_grad_norm,
            self.lr,
            self.hole_ratio
        )
    }
}

/// SplitMix64 finalizer over a combined key.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Horizontal flip and quarter-turn rotations of a square `[s, s, c]` image.
pub fn augment(img: &Tensor, flip: bool, quarter_turns: u8) -> Result<Tensor> {
    let (s, w, c) = match *img.shape() {
        [h, w, c] if h == w => (h, w, c),
        _ => return Err(Error::invalid_shape(img.shape(), "augmentation needs a square [s,s,c] image")),
    };
    debug_assert_eq!(s, w);
    Ok(Tensor::from_fn(img.shape(), |i| {
        let ch = i % c;
        let (mut y, mut x) = ((i / c) / s, (i / c) % s);
        for _ in 0..quarter_turns % 4 {
            (y, x) = (x, s - 1 - y);
        }
        if flip {
            x = s - 1 - x;
        }
        img.data()[(y * s + x) * c + ch]
    }))
}

/// Loads every `.ppm` in `dir` (sorted by file name).
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .ppm images in {}", dir.as_ref().display())));
    }
    paths.iter().map(pnm::read_image).collect()
}

struct ItemPass {
    tape: Tape,
    gt: Var,
    mask: MaskVars,
    coarse: Var,
    refine: Var,
    fake: Tensor,
    ratio: f64,
}

pub struct Trainer {
    pub config: RunConfig,
    pub model: InpaintModel,
    pub state: TrainingState,
    images: Vec<Tensor>,
    extractor: FeatureExtractor,
}

impl Trainer {
    /// Fresh model over the given corpus of `[s, s, 3]` images.
    pub fn new(config: RunConfig, images: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let model = InpaintModel::new(config.network_config(), config.seed)?;
        let state = TrainingState {
            iteration: 0,
            epoch: 0,
            lr: config.adam.lr,
            seed: config.seed,
            gen_adam: AdamState::new(&model.gen_params),
            disc_adam: AdamState::new(&model.disc_params),
        };
        Self::assemble(config, model, state, images)
    }

    /// Corpus from `data_dir`, or a synthetic one when it is empty.
    pub fn corpus(config: &RunConfig) -> Result<Vec<Tensor>> {
        if config.data_dir.is_empty() {
            Ok(synth::synth_corpus(config.synth_count, config.image_size, config.seed))
        } else {
            load_image_dir(&config.data_dir)
        }
    }

    pub fn from_config(config: RunConfig) -> Result<Self> {
        let images = Self::corpus(&config)?;
        Self::new(config, images)
    }

    /// Continues the run stored in `ck` over `images`.
    pub fn from_checkpoint(ck: &Checkpoint, images: Vec<Tensor>) -> Result<Self> {
        let (config, model) = ck.model()?;
        let state = ck.state.clone();
        if !state.gen_adam.matches(&model.gen_params) || !state.disc_adam.matches(&model.disc_params) {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        Self::assemble(config, model, state, images)
    }

    fn assemble(config: RunConfig, model: InpaintModel, state: TrainingState, images: Vec<Tensor>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Config("empty training corpus".into()));
        }
        let s = config.image_size;
        if let Some(bad) = images.iter().find(|t| t.shape() != [s, s, 3]) {
            return Err(Error::shape("training image", &[s, s, 3], bad.shape()));
        }
        let extractor = FeatureExtractor::new(config.extractor_seed);
        Ok(Trainer {
            config,
            model,
            state,
            images,
            extractor,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.config, &self.model, &self.state)
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.images.len().div_ceil(self.config.batch_size) as u64
    }

    /// Corpus indices for the step that follows `iteration` completed steps.
    pub fn batch_indices(&self, iteration: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let (epoch, k) = (iteration / spe, (iteration % spe) as usize);
        let mut perm: Vec<usize> = (0..self.images.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.state.seed, epoch, u64::MAX)));
        let b = self.config.batch_size;
        (0..b).map(|j| perm[(k * b + j) % perm.len()]).collect()
    }

    fn item_inputs(&self, iteration: u64, item: usize, index: usize) -> Result<(Tensor, Tensor)> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.state.seed, iteration, item as u64));
        let s = self.config.image_size;
        let mut img = self.images[index].clone();
        if self.config.augment {
            img = augment(&img, rng.gen(), rng.gen_range(0..4))?;
        }
        let mask = match self.config.mask_kind {
            MaskKind::Center => masks::gen_center_mask(s)?,
            MaskKind::Brush => {
                let range = schedule_step(&self.config.schedule, iteration);
                masks::gen_brush_mask(&MaskSpec::brush(s, range, rng.gen()))?
            }
        };
        Ok((img.into_reshaped(&[1, s, s, 3])?, mask.into_reshaped(&[1, s, s, 1])?))
    }

    fn generator_pass(&self, gt: Tensor, mask: Tensor) -> Result<ItemPass> {
        let mut tape = Tape::new();
        let ratio = masks::hole_ratio(&mask);
        let input = tape.constant(mask_image(&gt, &mask)?);
        let gt = tape.constant(gt);
        let mv = MaskVars::new(&mut tape, &mask)?;
        let out = self.model.generator.forward(&mut tape, &self.model.gen_params, input, &mv)?;
        let fake = tape.value(out.refine).clone();
        Ok(ItemPass {
            tape,
            gt,
            mask: mv,
            coarse: out.coarse,
            refine: out.refine,
            fake,
            ratio,
        })
    }

    fn disc_item(&self, pass: &ItemPass) -> Result<(f64, Grads)> {
        let d = &self.model.discriminator;
        let store = &self.model.disc_params;
        let mut tape = Tape::new();
        let real = tape.constant(pass.tape.value(pass.gt).clone());
        let fake = tape.constant(pass.fake.clone());
        let mask = tape.constant(pass.tape.value(pass.mask.single).clone());
        let real_logits = d.forward(&mut tape, store, real, mask)?;
        let fake_logits = d.forward(&mut tape, store, fake, mask)?;
        let loss = losses::gan_loss_d(&mut tape, real_logits, fake_logits, self.config.gan_loss)?;
        Ok((tape.scalar(loss)?, tape.backward(loss)?))
    }

    fn generator_item(&self, pass: &mut ItemPass) -> Result<(LossBreakdown, Grads)> {
        let tape = &mut pass.tape;
        let mv = pass.mask;
        let (hole, valid) = losses::content_loss(tape, pass.coarse, pass.refine, pass.gt, &mv)?;
        let logits = self
            .model
            .discriminator
            .forward(tape, &self.model.disc_params, pass.refine, mv.single)?;
        let adv = losses::gan_loss_g(tape, logits, self.config.gan_loss)?;
        let perceptual = losses::perceptual_loss(tape, pass.refine, pass.gt, &mv, &self.extractor)?;
        let edge = losses::edge_loss(tape, pass.refine, pass.gt)?;
        let terms = LossTerms {
            hole,
            valid,
            adv,
            perceptual,
            edge,
        };
        let (total, breakdown) = losses::total_loss(tape, &terms, &self.config.weights)?;
        if let Some(name) = breakdown.non_finite() {
            return Err(Error::NonFinite(format!("loss term {name} at iteration {}", self.state.iteration + 1)));
        }
        Ok((breakdown, tape.backward(total)?))
    }

    fn apply(store: &mut ParamStore, grads: &[Grads]) -> Result<()> {
        store.zero_grads();
        for g in grads {
            store.accumulate(g)?;
        }
        store.scale_grads(1.0 / grads.len() as f64);
        Ok(())
    }

    /// Runs one discriminator and one generator update.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let it = self.state.iteration;
        let indices = self.batch_indices(it);
        let mut passes = par::map_indexed(indices.len(), |j| {
            let (gt, mask) = self.item_inputs(it, j, indices[j])?;
            self.generator_pass(gt, mask)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let n = passes.len() as f64;
        let lr = self.state.lr;

        let disc: Vec<(f64, Grads)> = par::map_indexed(passes.len(), |j| self.disc_item(&passes[j]))
            .into_iter()
            .collect::<Result<_>>()?;
        let d_loss = disc.iter().map(|(l, _)| l).sum::<f64>() / n;
        if !d_loss.is_finite() {
            return Err(Error::NonFinite(format!("discriminator loss at iteration {}", it + 1)));
        }
        let d_grads: Vec<Grads> = disc.into_iter().map(|(_, g)| g).collect();
        Self::apply(&mut self.model.disc_params, &d_grads)?;
        let disc_grad_norm = self.model.disc_params.grad_norm();
        adam_step(&mut self.model.disc_params, &mut self.state.disc_adam, &self.config.adam, lr)?;

        let mut results: Vec<Option<Result<(LossBreakdown, Grads)>>> = (0..passes.len()).map(|_| None).collect();
        {
            let this = &*self;
            let mut paired: Vec<(&mut ItemPass, &mut Option<Result<(LossBreakdown, Grads)>>)> =
                passes.iter_mut().zip(results.iter_mut()).collect();
            par::for_each_mut(&mut paired, |_, (pass, out)| **out = Some(this.generator_item(pass)));
        }
        let mut breakdowns = Vec::with_capacity(passes.len());
        let mut g_grads = Vec::with_capacity(passes.len());
        for r in results {
            let (b, g) = r.expect("every item evaluated")?;
            breakdowns.push(b);
            g_grads.push(g);
        }
        Self::apply(&mut self.model.gen_params, &g_grads)?;
        let gen_grad_norm = self.model.gen_params.grad_norm();
        adam_step(&mut self.model.gen_params, &mut self.state.gen_adam, &self.config.adam, lr)?;

        let mean = |f: fn(&LossBreakdown) -> f64| breakdowns.iter().map(f).sum::<f64>() / n;
        let losses = LossBreakdown {
            hole: mean(|b| b.hole),
            valid: mean(|b| b.valid),
            adv: mean(|b| b.adv),
            perceptual: mean(|b| b.perceptual),
            edge: mean(|b| b.edge),
            total: mean(|b| b.total),
        };
        let hole_ratio = passes.iter().map(|p| p.ratio).sum::<f64>() / n;

        self.state.iteration += 1;
        if self.state.iteration % self.steps_per_epoch() == 0 {
            self.state.epoch += 1;
            self.state.lr *= self.config.adam.decay;
        }
        Ok(StepMetrics {
            iteration: self.state.iteration,
            losses,
            d_loss,
            gen_grad_norm,
            disc_grad_norm,
            lr,
            hole_ratio,
        })
    }

    /// Steps until `iterations` have completed, calling `on_step` after each.
    pub fn run_until(
        &mut self,
        iterations: u64,
        mut on_step: impl FnMut(&Self, &StepMetrics) -> Result<()>,
    ) -> Result<Vec<StepMetrics>> {
        let mut out = Vec::new();
        while self.state.iteration < iterations {
            let m = self.step()?;
            on_step(self, &m)?;
            out.push(m);
        }
        Ok(out)
    }

    /// Full run writing `metrics.csv`, periodic `ckpt_<iter>.hgin` and `final.hgin` into `out_dir`.
    pub fn run(&mut self) -> Result<Vec<StepMetrics>> {
        let dir = PathBuf::from(&self.config.out_dir);
        fs::create_dir_all(&dir)?;
        let csv_path = dir.join("metrics.csv");
        let fresh = !csv_path.exists() || fs::metadata(&csv_path)?.len() == 0;
        let mut csv = OpenOptions::new().create(true).append(true).open(&csv_path)?;
        if fresh {
            writeln!(csv, "{METRICS_HEADER}")?;
        }
        let every = self.config.checkpoint_every;
        let total = self.config.iterations;
        let metrics = self.run_until(total, |t, m| {
            writeln!(csv, "{}", m.csv_row())?;
            if every > 0 && m.iteration % every == 0 && m.iteration < total {
                t.checkpoint().save(dir.join(format!("ckpt_{:06}.hgin", m.iteration)))?;
            }
            Ok(())
        })?;
        csv.flush()?;
        self.checkpoint().save(dir.join("final.hgin"))?;
        Ok(metrics)
    }
}
