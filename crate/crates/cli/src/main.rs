use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hgin_core::checks::{self, Suite};
use hgin_core::io::checkpoint::Checkpoint;
use hgin_core::io::config::RunConfig;
use hgin_core::io::pnm;
use hgin_core::masks::{self, MaskSpec};
use hgin_core::metrics::EvalReport;
use hgin_core::synth;
use hgin_core::train::Trainer;
use hgin_core::Tensor;

#[derive(Parser)]
#[command(name = "hgin", version, about = "Hypergraph-convolution image inpainting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a key=value config, optionally continuing a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Complete one image.
    Inpaint {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the coarse-stage output next to `--out`.
        #[arg(long)]
        emit_coarse: bool,
    },
    /// Score completions of an image directory against matching masks.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run finite-difference gradient suites.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = Module::All)]
        module: Module,
    },
    /// Write binary hole masks as P5 images.
    MakeMasks {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Hole ratio range `lo:hi`; required for brush masks.
        #[arg(long, value_parser = parse_ratio)]
        ratio: Option<(f64, f64)>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic image corpus.
    SynthData {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Module {
    All,
    Hypergraph,
    Gated,
    Losses,
    Generator,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Center,
    Brush,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_ratio(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("invalid lower bound {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("invalid upper bound {hi:?}"))?;
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(format!("ratio {lo}:{hi} must satisfy 0 < lo <= hi < 1"));
    }
    Ok((lo, hi))
}

fn batched(t: Tensor) -> Result<Tensor> {
    let s = t.shape().to_vec();
    Ok(t.into_reshaped(&[1, s[0], s[1], s[2]])?)
}

fn load_pair(image: &Path, mask: &Path) -> Result<(Tensor, Tensor)> {
    let img = pnm::read_image(image).with_context(|| format!("reading {}", image.display()))?;
    let m = pnm::read_mask(mask).with_context(|| format!("reading {}", mask.display()))?;
    if img.shape()[2] != 3 {
        return Err(usage(format!("{} must be an RGB P6 image", image.display())));
    }
    if img.shape()[..2] != m.shape()[..2] {
        return Err(usage(format!(
            "image {} has shape {:?} but mask {} has shape {:?}",
            image.display(),
            img.shape(),
            mask.display(),
            m.shape()
        )));
    }
    Ok((batched(img)?, batched(m)?))
}

fn train(config: &Path, resume: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let mut trainer = match resume {
        None => Trainer::from_config(cfg)?,
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            let stored = ck.config()?;
            if stored.network_config() != cfg.network_config() || stored.seed != cfg.seed {
                bail!("{} was trained with a different model or seed than {}", path.display(), config.display());
            }
            let images = Trainer::corpus(&cfg)?;
            let mut t = Trainer::from_checkpoint(&ck, images)?;
            t.config = cfg;
            t
        }
    };
    eprintln!(
        "training {} -> {} (from iteration {}, {} generator parameters)",
        trainer.config.iterations,
        trainer.config.out_dir,
        trainer.state.iteration,
        trainer.model.gen_params.num_scalars()
    );
    let metrics = trainer.run()?;
    if let Some(m) = metrics.last() {
        eprintln!(
            "done at iteration {}: hole {:.5} total {:.5} d_loss {:.5}",
            m.iteration, m.losses.hole, m.losses.total, m.d_loss
        );
    }
    Ok(())
}

fn inpaint(ckpt: &Path, image: &Path, mask: &Path, out: &Path, emit_coarse: bool) -> Result<()> {
    let (img, m) = load_pair(image, mask)?;
    let (_, model) = Checkpoint::load(ckpt)
        .and_then(|ck| ck.model())
        .with_context(|| format!("loading {}", ckpt.display()))?;
    let (coarse, _, comp) = model.inpaint(&img, &m)?;
    pnm::write_image(out, &comp)?;
    if emit_coarse {
        let path = out.with_extension("coarse.ppm");
        pnm::write_image(&path, &coarse)?;
        eprintln!("wrote {} and {}", out.display(), path.display());
    }
    Ok(())
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    Ok(v)
}

/// Masks named after each image stem, or else matched by sorted position.
fn pair_masks(images: &[PathBuf], masks_dir: &Path) -> Result<Vec<PathBuf>> {
    let by_stem: Vec<PathBuf> = images
        .iter()
        .map(|p| masks_dir.join(p.file_stem().unwrap_or_default()).with_extension("pgm"))
        .collect();
    if by_stem.iter().all(|m| m.exists()) {
        return Ok(by_stem);
    }
    let sorted = files_with_ext(masks_dir, "pgm")?;
    if sorted.len() != images.len() {
        return Err(usage(format!(
            "{} images but {} masks in {}, and mask names do not match image names",
            images.len(),
            sorted.len(),
            masks_dir.display()
        )));
    }
    Ok(sorted)
}

fn eval(ckpt: &Path, images: &Path, masks_dir: &Path, report: &Path) -> Result<()> {
    let (_, model) = Checkpoint::load(ckpt)
        .and_then(|ck| ck.model())
        .with_context(|| format!("loading {}", ckpt.display()))?;
    let paths = files_with_ext(images, "ppm")?;
    if paths.is_empty() {
        return Err(usage(format!("no .ppm images in {}", images.display())));
    }
    let mask_paths = pair_masks(&paths, masks_dir)?;
    let mut items = Vec::with_capacity(paths.len());
    for (p, mask_path) in paths.iter().zip(&mask_paths) {
        let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let (img, m) = load_pair(p, mask_path)?;
        let ratio = masks::hole_ratio(&m);
        let (_, _, comp) = model.inpaint(&img, &m)?;
        items.push((id, comp, img, ratio));
    }
    let rep = EvalReport::evaluate(&items)?;
    fs::write(report, rep.to_csv())?;
    for b in rep.aggregate() {
        println!(
            "{:<8} n={:<4} psnr {:>7.3} ssim {:.4} l1 {:.3}% l2 {:.3}%",
            b.bucket, b.count, b.psnr, b.ssim, b.l1, b.l2
        );
    }
    Ok(())
}

fn gradcheck(module: Module) -> Result<bool> {
    let suite = match module {
        Module::All => Suite::All,
        Module::Hypergraph => Suite::Hypergraph,
        Module::Gated => Suite::Gated,
        Module::Losses => Suite::Losses,
        Module::Generator => Suite::Generator,
    };
    let results = checks::run_suite(suite)?;
    for r in &results {
        eprintln!("{}", r.summary());
    }
    Ok(results.iter().all(|r| r.passed()))
}

fn make_masks(kind: Kind, ratio: Option<(f64, f64)>, n: usize, seed: u64, size: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    for i in 0..n {
        let mask = match kind {
            Kind::Center => masks::gen_center_mask(size)?,
            Kind::Brush => {
                let range = ratio.ok_or_else(|| usage("--ratio lo:hi is required for brush masks"))?;
                masks::gen_brush_mask(&MaskSpec::brush(size, range, seed.wrapping_add(i as u64)))?
            }
        };
        pnm::write_mask(out.join(format!("mask_{i:04}.pgm")), &mask)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, resume } => train(&config, resume.as_deref())?,
        Command::Inpaint {
            ckpt,
            image,
            mask,
            out,
            emit_coarse,
        } => inpaint(&ckpt, &image, &mask, &out, emit_coarse)?,
        Command::Eval {
            ckpt,
            images,
            masks,
            report,
        } => eval(&ckpt, &images, &masks, &report)?,
        Command::Gradcheck { module } => return gradcheck(module),
        Command::MakeMasks {
            kind,
            ratio,
            n,
            seed,
            size,
            out,
        } => make_masks(kind, ratio, n, seed, size, &out)?,
        Command::SynthData { n, size, seed, out } => {
            synth::write_corpus(&out, &synth::synth_corpus(n, size, seed))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
