//! Flat `key = value` run configuration.
//!
//! Every key has a default, `#` starts a comment, and unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::{GanLoss, LossWeights};
use crate::masks::MaskKind;
use crate::net::NetworkConfig;
use crate::optim::AdamConfig;
use crate::schedule::IncrementalSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub image_size: usize,
    pub base_channels: usize,
    pub use_hypergraph: bool,
    pub disc_gated: bool,
    /// 0 selects the default for the bottleneck resolution.
    pub hg_edges: usize,
    /// 0 selects the default for the bottleneck width.
    pub hg_embed: usize,
    pub hg_window: usize,
    pub hg_epsilon: f64,
    pub weights: LossWeights,
    pub gan_loss: GanLoss,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub iterations: u64,
    pub schedule: IncrementalSchedule,
    pub mask_kind: MaskKind,
    pub augment: bool,
    /// Directory of training PPMs; empty selects a synthetic corpus.
    pub data_dir: String,
    pub synth_count: usize,
    pub extractor_seed: u64,
    pub out_dir: String,
    /// Write a checkpoint every this many iterations; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            image_size: 32,
            base_channels: 32,
            use_hypergraph: true,
            disc_gated: true,
            hg_edges: 0,
            hg_embed: 0,
            hg_window: 7,
            hg_epsilon: 1e-6,
            weights: LossWeights::default(),
            gan_loss: GanLoss::Vanilla,
            adam: AdamConfig::default(),
            batch_size: 4,
            iterations: 8000,
            schedule: IncrementalSchedule::default_ladder(),
            mask_kind: MaskKind::Brush,
            augment: true,
            data_dir: String::new(),
            synth_count: 200,
            extractor_seed: 7,
            out_dir: "run".into(),
            checkpoint_every: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for key {key:?}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "dtype" => {
                if value != "f64" {
                    return Err(Error::Config(format!("unsupported dtype {value:?}; only f64 is available")));
                }
            }
            "image_size" => self.image_size = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "use_hypergraph" => self.use_hypergraph = parse_bool(key, value)?,
            "disc_gated" => self.disc_gated = parse_bool(key, value)?,
            "hg_edges" => self.hg_edges = parse(key, value)?,
            "hg_embed" => self.hg_embed = parse(key, value)?,
            "hg_window" => self.hg_window = parse(key, value)?,
            "hg_epsilon" => self.hg_epsilon = parse(key, value)?,
            "lambda_hole" => self.weights.hole = parse(key, value)?,
            "lambda_valid" => self.weights.valid = parse(key, value)?,
            "lambda_adv" => self.weights.adv = parse(key, value)?,
            "lambda_p" => self.weights.perceptual = parse(key, value)?,
            "lambda_edge" => self.weights.edge = parse(key, value)?,
            "gan_loss" => {
                self.gan_loss = match value {
                    "vanilla" => GanLoss::Vanilla,
                    "hinge" => GanLoss::Hinge,
                    _ => return Err(Error::Config(format!("unknown gan_loss {value:?}"))),
                }
            }
            "lr" => self.adam.lr = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "adam_eps" => self.adam.eps = parse(key, value)?,
            "lr_decay" => self.adam.decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "stages" => self.schedule = value.parse()?,
            "mask_kind" => self.mask_kind = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "augment" => self.augment = parse_bool(key, value)?,
            "data_dir" => self.data_dir = value.to_string(),
            "synth_count" => self.synth_count = parse(key, value)?,
            "extractor_seed" => self.extractor_seed = parse(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.image_size == 0 || self.image_size % 4 != 0 {
            return Err(Error::Config("image_size must be a positive multiple of 4".into()));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.decay > 0.0) {
            return Err(Error::Config("lr and lr_decay must be positive".into()));
        }
        self.network_config()
            .validate()
            .and_then(|_| self.network_config().hypergraph_config().validate())
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn network_config(&self) -> NetworkConfig {
        let mut n = NetworkConfig::new(self.base_channels, self.image_size);
        n.hypergraph.enabled = self.use_hypergraph;
        n.hypergraph.edges = (self.hg_edges > 0).then_some(self.hg_edges);
        n.hypergraph.embed = (self.hg_embed > 0).then_some(self.hg_embed);
        n.hypergraph.window = self.hg_window;
        n.hypergraph.epsilon = self.hg_epsilon;
        n.disc_gated = self.disc_gated;
        n
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        Path::new(&self.out_dir).join(name)
    }

    /// Canonical text form; `parse_str(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("dtype", "f64".into());
        kv("image_size", self.image_size.to_string());
        kv("base_channels", self.base_channels.to_string());
        kv("use_hypergraph", self.use_hypergraph.to_string());
        kv("disc_gated", self.disc_gated.to_string());
        kv("hg_edges", self.hg_edges.to_string());
        kv("hg_embed", self.hg_embed.to_string());
        kv("hg_window", self.hg_window.to_string());
        kv("hg_epsilon", self.hg_epsilon.to_string());
        kv("lambda_hole", self.weights.hole.to_string());
        kv("lambda_valid", self.weights.valid.to_string());
        kv("lambda_adv", self.weights.adv.to_string());
        kv("lambda_p", self.weights.perceptual.to_string());
        kv("lambda_edge", self.weights.edge.to_string());
        kv(
            "gan_loss",
            match self.gan_loss {
                GanLoss::Vanilla => "vanilla",
                GanLoss::Hinge => "hinge",
            }
            .into(),
        );
        kv("lr", self.adam.lr.to_string());
        kv("beta1", self.adam.beta1.to_string());
        kv("beta2", self.adam.beta2.to_string());
        kv("adam_eps", self.adam.eps.to_string());
        kv("lr_decay", self.adam.decay.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("iterations", self.iterations.to_string());
        kv("stages", self.schedule.to_string());
        kv(
            "mask_kind",
            match self.mask_kind {
                MaskKind::Center => "center",
                MaskKind::Brush => "brush",
            }
            .into(),
        );
        kv("augment", self.augment.to_string());
        kv("data_dir", self.data_dir.clone());
        kv("synth_count", self.synth_count.to_string());
        kv("extractor_seed", self.extractor_seed.to_string());
        kv("out_dir", self.out_dir.clone());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }
}
