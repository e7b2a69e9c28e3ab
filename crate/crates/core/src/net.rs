//! Gated convolutions and the coarse → refine generator with its patch discriminator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergraph::{HypergraphConfig, HypergraphLayer, DEFAULT_EPSILON, DEFAULT_WINDOW};
use crate::init::kaiming_uniform;
use crate::kernels::Padding;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Elu,
    LeakyRelu,
    None,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Elu => tape.elu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::None => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatedConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub activation: Activation,
}

impl GatedConvSpec {
    pub fn new(kernel: usize, stride: usize, dilation: usize, c_in: usize, c_out: usize, activation: Activation) -> Self {
        GatedConvSpec {
            kernel,
            stride,
            dilation,
            c_in,
            c_out,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 || self.stride == 0 || self.dilation == 0 || self.c_in == 0 || self.c_out == 0 {
            return Err(Error::InvalidArgument(format!("invalid gated conv spec {self:?}")));
        }
        Ok(())
    }
}

/// A generator layer: optional nearest upsampling followed by a gated convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub upsample: usize,
    pub conv: GatedConvSpec,
}

/// `O = φ(conv(W_f, I)) ⊙ σ(conv(W_g, I))`, or `φ(conv(W_f, I))` when ungated.
#[derive(Debug, Clone)]
pub struct GatedConv {
    pub spec: GatedConvSpec,
    pub w_feature: ParamId,
    pub b_feature: ParamId,
    pub gate: Option<(ParamId, ParamId)>,
}

impl GatedConv {
    pub fn new(store: &mut ParamStore, prefix: &str, spec: GatedConvSpec, gated: bool, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let shape = [spec.kernel, spec.kernel, spec.c_in, spec.c_out];
        let fan_in = spec.kernel * spec.kernel * spec.c_in;
        let w_feature = store.add(format!("{prefix}.feature.weight"), kaiming_uniform(&shape, fan_in, rng))?;
        let b_feature = store.add(format!("{prefix}.feature.bias"), Tensor::zeros(&[spec.c_out]))?;
        let gate = if gated {
            let w = store.add(format!("{prefix}.gate.weight"), kaiming_uniform(&shape, fan_in, rng))?;
            let b = store.add(format!("{prefix}.gate.bias"), Tensor::zeros(&[spec.c_out]))?;
            Some((w, b))
        } else {
            None
        };
        Ok(GatedConv {
            spec,
            w_feature,
            b_feature,
            gate,
        })
    }

    fn conv(&self, tape: &mut Tape, store: &ParamStore, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = tape.param(store, w);
        let b = tape.param(store, b);
        tape.conv2d(x, w, Some(b), self.spec.stride, self.spec.dilation, Padding::Same)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let c_in = tape.value(x).dims4()?.3;
        if c_in != self.spec.c_in {
            return Err(Error::shape("gated_conv input", tape.shape(x), &[self.spec.c_in]));
        }
        let features = self.conv(tape, store, x, self.w_feature, self.b_feature)?;
        let features = self.spec.activation.apply(tape, features);
        match self.gate {
            Some((w, b)) => {
                let gating = self.conv(tape, store, x, w, b)?;
                let gate = tape.sigmoid(gating);
                tape.mul(features, gate)
            }
            None => Ok(features),
        }
    }
}

/// Settings for the refine network's hypergraph layer. `None` sizes use the
/// layer defaults for the bottleneck resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphSettings {
    pub enabled: bool,
    pub edges: Option<usize>,
    pub embed: Option<usize>,
    pub window: usize,
    pub epsilon: f64,
}

impl Default for HypergraphSettings {
    fn default() -> Self {
        HypergraphSettings {
            enabled: true,
            edges: None,
            embed: None,
            window: DEFAULT_WINDOW,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub base_channels: usize,
    pub input_resolution: usize,
    pub coarse_layers: Vec<Block>,
    pub refine_layers: Vec<Block>,
    pub disc_layers: Vec<GatedConvSpec>,
    pub hypergraph: HypergraphSettings,
    /// Gated convolutions in the discriminator; plain convolutions when off.
    pub disc_gated: bool,
}

/// Encoder (two stride-2 layers), dilated bottleneck (2, 4), decoder (two upsampling layers).
pub fn generator_layers(base: usize) -> Vec<Block> {
    use Activation::Elu;
    let (c, c2, c4) = (base, 2 * base, 4 * base);
    let b = |upsample, conv| Block { upsample, conv };
    vec![
        b(1, GatedConvSpec::new(5, 2, 1, 4, c2, Elu)),
        b(1, GatedConvSpec::new(3, 2, 1, c2, c4, Elu)),
        b(1, GatedConvSpec::new(3, 1, 2, c4, c4, Elu)),
        b(1, GatedConvSpec::new(3, 1, 4, c4, c4, Elu)),
        b(2, GatedConvSpec::new(3, 1, 1, c4, c2, Elu)),
        b(2, GatedConvSpec::new(3, 1, 1, c2, c, Elu)),
    ]
}

/// Four stride-2 layers with leaky-ReLU.
pub fn discriminator_layers(base: usize) -> Vec<GatedConvSpec> {
    use Activation::LeakyRelu;
    let (c, c2, c4) = (base, 2 * base, 4 * base);
    vec![
        GatedConvSpec::new(5, 2, 1, 4, c, LeakyRelu),
        GatedConvSpec::new(5, 2, 1, c, c2, LeakyRelu),
        GatedConvSpec::new(5, 2, 1, c2, c4, LeakyRelu),
        GatedConvSpec::new(5, 2, 1, c4, c4, LeakyRelu),
    ]
}

impl NetworkConfig {
    pub fn new(base_channels: usize, input_resolution: usize) -> Self {
        NetworkConfig {
            base_channels,
            input_resolution,
            coarse_layers: generator_layers(base_channels),
            refine_layers: generator_layers(base_channels),
            disc_layers: discriminator_layers(base_channels),
            hypergraph: HypergraphSettings::default(),
            disc_gated: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_resolution == 0 || self.input_resolution % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input resolution {} must be a positive multiple of 4",
                self.input_resolution
            )));
        }
        for layers in [&self.coarse_layers, &self.refine_layers] {
            let first = layers
                .first()
                .ok_or_else(|| Error::InvalidArgument("empty generator layer table".into()))?;
            if first.conv.c_in != 4 {
                return Err(Error::InvalidArgument("generator input must have 4 channels".into()));
            }
            for pair in layers.windows(2) {
                if pair[0].conv.c_out != pair[1].conv.c_in {
                    return Err(Error::InvalidArgument("generator layer widths do not chain".into()));
                }
            }
            let down: usize = layers.iter().map(|b| b.conv.stride).product();
            let up: usize = layers.iter().map(|b| b.upsample).product();
            if down != up {
                return Err(Error::InvalidArgument(
                    "generator must upsample as much as it downsamples".into(),
                ));
            }
        }
        if self.disc_layers.first().map(|l| l.c_in) != Some(4) {
            return Err(Error::InvalidArgument("discriminator input must have 4 channels".into()));
        }
        Ok(())
    }

    /// Resolution of the refine network's bottleneck, where the hypergraph layer runs.
    pub fn bottleneck(&self) -> (usize, usize) {
        let (idx, _) = bottleneck_index(&self.refine_layers);
        let down: usize = self.refine_layers[..=idx].iter().map(|b| b.conv.stride).product();
        let side = self.input_resolution.div_ceil(down);
        (side, self.refine_layers[idx].conv.c_out)
    }

    pub fn hypergraph_config(&self) -> HypergraphConfig {
        let (side, channels) = self.bottleneck();
        let s = &self.hypergraph;
        let mut cfg = HypergraphConfig::with_defaults(channels, channels, side * side);
        if let Some(e) = s.edges {
            cfg.edges = e;
        }
        if let Some(e) = s.embed {
            cfg.embed = e;
        }
        cfg.window = s.window;
        cfg.epsilon = s.epsilon;
        cfg
    }
}

/// Last layer before the first upsampling block, and its index.
fn bottleneck_index(layers: &[Block]) -> (usize, Block) {
    let idx = layers
        .iter()
        .position(|b| b.upsample > 1)
        .unwrap_or(layers.len())
        .saturating_sub(1);
    (idx, layers[idx])
}

/// One encoder/decoder stage producing an RGB image in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Stage {
    pub blocks: Vec<(usize, GatedConv)>,
    pub hypergraph: Option<(usize, HypergraphLayer)>,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

impl Stage {
    fn new(
        store: &mut ParamStore,
        prefix: &str,
        layers: &[Block],
        hypergraph: Option<HypergraphConfig>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(layers.len());
        for (i, b) in layers.iter().enumerate() {
            let conv = GatedConv::new(store, &format!("{prefix}.l{}", i + 1), b.conv, true, rng)?;
            blocks.push((b.upsample, conv));
        }
        let hypergraph = match hypergraph {
            Some(cfg) => {
                let (idx, _) = bottleneck_index(layers);
                Some((idx, HypergraphLayer::new(store, &format!("{prefix}.hg"), cfg, rng)?))
            }
            None => None,
        };
        let c = layers.last().expect("non-empty layer table").conv.c_out;
        let out_weight = store.add(format!("{prefix}.out.weight"), kaiming_uniform(&[1, 1, c, 3], c, rng))?;
        let out_bias = store.add(format!("{prefix}.out.bias"), Tensor::zeros(&[3]))?;
        Ok(Stage {
            blocks,
            hypergraph,
            out_weight,
            out_bias,
        })
    }

    /// `image: [b,h,w,3]`, `mask: [b,h,w,1]` with 1 marking holes.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, image: Var, mask: Var) -> Result<Var> {
        let (_, h, w, _) = tape.value(image).dims4()?;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::invalid_shape(
                tape.shape(image),
                "generator resolution must be divisible by 4",
            ));
        }
        let mut x = tape.concat_channels(&[image, mask])?;
        for (i, (upsample, conv)) in self.blocks.iter().enumerate() {
            if *upsample > 1 {
                x = tape.upsample_nearest(x, *upsample)?;
            }
            x = conv.forward(tape, store, x)?;
            if let Some((at, hg)) = &self.hypergraph {
                if *at == i {
                    x = hg.forward(tape, store, x)?;
                }
            }
        }
        let w = tape.param(store, self.out_weight);
        let b = tape.param(store, self.out_bias);
        let y = tape.conv2d(x, w, Some(b), 1, 1, Padding::Same)?;
        let y = tape.tanh(y);
        let y = tape.add_scalar(y, 1.0);
        Ok(tape.scale(y, 0.5))
    }
}

/// Tape constants for a hole mask `R` (1 = hole).
#[derive(Debug, Clone, Copy)]
pub struct MaskVars {
    pub single: Var,
    pub hole: Var,
    pub valid: Var,
}

impl MaskVars {
    pub fn new(tape: &mut Tape, mask: &Tensor) -> Result<Self> {
        let hole3 = mask.repeat_channels(3)?;
        let valid3 = hole3.map(|r| 1.0 - r);
        Ok(MaskVars {
            single: tape.constant(mask.clone()),
            hole: tape.constant(hole3),
            valid: tape.constant(valid3),
        })
    }
}

/// `R ⊙ coarse + (1 − R) ⊙ input` on the tape.
pub fn blend_on_tape(tape: &mut Tape, input: Var, coarse: Var, mask: &MaskVars) -> Result<Var> {
    let fill = tape.mul(mask.hole, coarse)?;
    let keep = tape.mul(mask.valid, input)?;
    tape.add(fill, keep)
}

/// `R ⊙ coarse + (1 − R) ⊙ input` for a single-channel mask `R`.
pub fn blend(input: &Tensor, coarse: &Tensor, mask: &Tensor) -> Result<Tensor> {
    input.same_shape("blend", coarse)?;
    let c = *input.shape().last().unwrap();
    let r = mask.repeat_channels(c)?;
    input.same_shape("blend mask", &r)?;
    Ok(Tensor::from_fn(input.shape(), |i| {
        r.data()[i] * coarse.data()[i] + (1.0 - r.data()[i]) * input.data()[i]
    }))
}

/// Zeroes hole pixels of `image` (`[.., 3]`) under a single-channel mask.
pub fn mask_image(image: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let r = mask.repeat_channels(*image.shape().last().unwrap())?;
    image.zip_map(&r, |v, r| v * (1.0 - r))
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutput {
    pub coarse: Var,
    pub blended: Var,
    pub refine: Var,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub coarse: Stage,
    pub refine: Stage,
}

impl Generator {
    pub fn new(store: &mut ParamStore, config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let coarse = Stage::new(store, "coarse", &config.coarse_layers, None, rng)?;
        let hg = config.hypergraph.enabled.then(|| config.hypergraph_config());
        let refine = Stage::new(store, "refine", &config.refine_layers, hg, rng)?;
        Ok(Generator { coarse, refine })
    }

    /// Runs coarse → blend → refine. `input` must already have its holes zeroed.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, input: Var, mask: &MaskVars) -> Result<GeneratorOutput> {
        let coarse = self.coarse.forward(tape, store, input, mask.single)?;
        let blended = blend_on_tape(tape, input, coarse, mask)?;
        let refine = self.refine.forward(tape, store, blended, mask.single)?;
        Ok(GeneratorOutput {
            coarse,
            blended,
            refine,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub layers: Vec<GatedConv>,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let layers = config
            .disc_layers
            .iter()
            .enumerate()
            .map(|(i, spec)| GatedConv::new(store, &format!("disc.l{}", i + 1), *spec, config.disc_gated, rng))
            .collect::<Result<Vec<_>>>()?;
        let c = config.disc_layers.last().expect("non-empty").c_out;
        let out_weight = store.add("disc.out.weight", kaiming_uniform(&[1, 1, c, 1], c, rng))?;
        let out_bias = store.add("disc.out.bias", Tensor::zeros(&[1]))?;
        Ok(Discriminator {
            layers,
            out_weight,
            out_bias,
        })
    }

    /// Patch logits for `image: [b,h,w,3]` judged together with its mask.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, image: Var, mask: Var) -> Result<Var> {
        let mut x = tape.concat_channels(&[image, mask])?;
        for layer in &self.layers {
            x = layer.forward(tape, store, x)?;
        }
        let w = tape.param(store, self.out_weight);
        let b = tape.param(store, self.out_bias);
        tape.conv2d(x, w, Some(b), 1, 1, Padding::Same)
    }
}

/// Generator and discriminator with their parameters.
#[derive(Debug, Clone)]
pub struct InpaintModel {
    pub config: NetworkConfig,
    pub generator: Generator,
    pub gen_params: ParamStore,
    pub discriminator: Discriminator,
    pub disc_params: ParamStore,
}

impl InpaintModel {
    /// Seeded initialization; generator and discriminator draw from independent streams.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut gen_params = ParamStore::new();
        let mut disc_params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = Generator::new(&mut gen_params, &config, &mut rng)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let discriminator = Discriminator::new(&mut disc_params, &config, &mut rng)?;
        Ok(InpaintModel {
            config,
            generator,
            gen_params,
            discriminator,
            disc_params,
        })
    }

    /// Completes one batch; returns `(coarse, refine, composite)` where the
    /// composite keeps the known pixels of `image`.
    pub fn inpaint(&self, image: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let (b, h, w, _) = image.dims4()?;
        if mask.shape() != [b, h, w, 1] {
            return Err(Error::shape("inpaint mask", image.shape(), mask.shape()));
        }
        let mut tape = Tape::new();
        let input = tape.constant(mask_image(image, mask)?);
        let mv = MaskVars::new(&mut tape, mask)?;
        let out = self.generator.forward(&mut tape, &self.gen_params, input, &mv)?;
        let refine = tape.value(out.refine).clone();
        let comp = blend(image, &refine, mask)?;
        Ok((tape.value(out.coarse).clone(), refine, comp))
    }
}
