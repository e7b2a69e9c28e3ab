//! Training objectives: hole/valid reconstruction, adversarial, perceptual and edge losses.
//!
//! All `‖·‖₁` terms are means over every element of their operand, so the
//! weights do not depend on image resolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::init::kaiming_uniform;
use crate::kernels::Padding;
use crate::net::{blend_on_tape, MaskVars};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub hole: f64,
    pub valid: f64,
    pub adv: f64,
    pub perceptual: f64,
    pub edge: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            hole: 6.0,
            valid: 1.0,
            adv: 0.1,
            perceptual: 0.05,
            edge: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.hole, self.valid, self.adv, self.perceptual, self.edge];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidArgument("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanLoss {
    /// Non-saturating log loss on patch logits.
    Vanilla,
    Hinge,
}

/// `mean |a − b|`.
pub fn l1_mean(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let d = tape.abs(d);
    Ok(tape.mean(d))
}

fn masked_l1(tape: &mut Tape, pred: Var, gt: Var, region: Var) -> Result<Var> {
    let d = tape.sub(pred, gt)?;
    let d = tape.mul(region, d)?;
    let d = tape.abs(d);
    Ok(tape.mean(d))
}

/// `(L_hole, L_valid)`; the coarse terms carry half weight.
pub fn content_loss(tape: &mut Tape, coarse: Var, refine: Var, gt: Var, mask: &MaskVars) -> Result<(Var, Var)> {
    let mut term = |region: Var| -> Result<Var> {
        let r = masked_l1(tape, refine, gt, region)?;
        let c = masked_l1(tape, coarse, gt, region)?;
        let c = tape.scale(c, 0.5);
        tape.add(r, c)
    };
    let hole = term(mask.hole)?;
    let valid = term(mask.valid)?;
    Ok((hole, valid))
}

/// Discriminator loss on real and fake patch logits.
pub fn gan_loss_d(tape: &mut Tape, real: Var, fake: Var, kind: GanLoss) -> Result<Var> {
    match kind {
        GanLoss::Vanilla => {
            // -log σ(x) = softplus(-x), -log(1 - σ(x)) = softplus(x)
            let neg = tape.neg(real);
            let r = tape.softplus(neg);
            let r = tape.mean(r);
            let f = tape.softplus(fake);
            let f = tape.mean(f);
            tape.add(r, f)
        }
        GanLoss::Hinge => {
            let r = tape.neg(real);
            let r = tape.add_scalar(r, 1.0);
            let r = tape.relu(r);
            let r = tape.mean(r);
            let f = tape.add_scalar(fake, 1.0);
            let f = tape.relu(f);
            let f = tape.mean(f);
            tape.add(r, f)
        }
    }
}

/// Generator adversarial loss on fake patch logits.
pub fn gan_loss_g(tape: &mut Tape, fake: Var, kind: GanLoss) -> Result<Var> {
    match kind {
        GanLoss::Vanilla => {
            let neg = tape.neg(fake);
            let l = tape.softplus(neg);
            Ok(tape.mean(l))
        }
        GanLoss::Hinge => {
            let m = tape.mean(fake);
            Ok(tape.neg(m))
        }
    }
}

/// Source of multi-level features for the perceptual loss.
pub trait FeatureSource: Send + Sync {
    fn features(&self, tape: &mut Tape, image: Var) -> Result<Vec<Var>>;
}

/// Frozen random convolution stack: three stride-2 stages of 16, 32 and 64 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    stages: Vec<(Tensor, Tensor)>,
}

impl FeatureExtractor {
    pub const WIDTHS: [usize; 3] = [16, 32, 64];

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = 3;
        let stages = Self::WIDTHS
            .iter()
            .map(|&c| {
                let w = kaiming_uniform(&[3, 3, c_in, c], 9 * c_in, &mut rng);
                let b = Tensor::from_fn(&[c], |_| 0.0);
                c_in = c;
                (w, b)
            })
            .collect();
        FeatureExtractor { stages }
    }

    pub fn weights(&self) -> impl Iterator<Item = &Tensor> {
        self.stages.iter().flat_map(|(w, b)| [w, b])
    }
}

impl FeatureSource for FeatureExtractor {
    fn features(&self, tape: &mut Tape, image: Var) -> Result<Vec<Var>> {
        let mut x = image;
        let mut out = Vec::with_capacity(self.stages.len());
        for (w, b) in &self.stages {
            let w = tape.constant(w.clone());
            let b = tape.constant(b.clone());
            let y = tape.conv2d(x, w, Some(b), 2, 1, Padding::Same)?;
            x = tape.elu(y);
            out.push(x);
        }
        Ok(out)
    }
}

/// Feature-space L1 of both the raw prediction and the composite (known pixels from `gt`).
pub fn perceptual_loss(
    tape: &mut Tape,
    refine: Var,
    gt: Var,
    mask: &MaskVars,
    extractor: &dyn FeatureSource,
) -> Result<Var> {
    let comp = blend_on_tape(tape, gt, refine, mask)?;
    let target = extractor.features(tape, gt)?;
    let mut total: Option<Var> = None;
    for image in [refine, comp] {
        let feats = extractor.features(tape, image)?;
        for (&f, &t) in feats.iter().zip(&target) {
            let term = l1_mean(tape, f, t)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
    }
    total.ok_or_else(|| Error::InvalidArgument("feature extractor produced no stages".into()))
}

pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const EDGE_FLOOR: f64 = 1e-12;

/// Per-channel Sobel kernel `[3, 3, c, c]`; `transpose` gives the vertical filter.
pub fn sobel_kernel(c: usize, transpose: bool) -> Tensor {
    let mut k = Tensor::zeros(&[3, 3, c, c]);
    for ky in 0..3 {
        for kx in 0..3 {
            let v = if transpose { SOBEL_X[kx][ky] } else { SOBEL_X[ky][kx] };
            for ch in 0..c {
                k.set(&[ky, kx, ch, ch], v);
            }
        }
    }
    k
}

/// `√(Gx² + Gy² + 1e-12)` per channel with zero padding.
pub fn sobel_magnitude(tape: &mut Tape, x: Var) -> Result<Var> {
    let c = tape.value(x).dims4()?.3;
    let kx = tape.constant(sobel_kernel(c, false));
    let ky = tape.constant(sobel_kernel(c, true));
    let gx = tape.conv2d(x, kx, None, 1, 1, Padding::Same)?;
    let gy = tape.conv2d(x, ky, None, 1, 1, Padding::Same)?;
    let gx2 = tape.mul(gx, gx)?;
    let gy2 = tape.mul(gy, gy)?;
    let s = tape.add(gx2, gy2)?;
    let s = tape.add_scalar(s, EDGE_FLOOR);
    Ok(tape.sqrt(s))
}

pub fn edge_loss(tape: &mut Tape, refine: Var, gt: Var) -> Result<Var> {
    let a = sobel_magnitude(tape, refine)?;
    let b = sobel_magnitude(tape, gt)?;
    l1_mean(tape, a, b)
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub hole: Var,
    pub valid: Var,
    pub adv: Var,
    pub perceptual: Var,
    pub edge: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub hole: f64,
    pub valid: f64,
    pub adv: f64,
    pub perceptual: f64,
    pub edge: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("hole", self.hole),
            ("valid", self.valid),
            ("adv", self.adv),
            ("perceptual", self.perceptual),
            ("edge", self.edge),
            ("total", self.total),
        ]
    }

    /// First non-finite term, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.named().into_iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| n)
    }
}

/// Weighted sum of the five terms plus the per-term values.
pub fn total_loss(tape: &mut Tape, terms: &LossTerms, w: &LossWeights) -> Result<(Var, LossBreakdown)> {
    let parts = [
        (terms.hole, w.hole),
        (terms.valid, w.valid),
        (terms.adv, w.adv),
        (terms.perceptual, w.perceptual),
        (terms.edge, w.edge),
    ];
    let mut total: Option<Var> = None;
    for (v, weight) in parts {
        let s = tape.scale(v, weight);
        total = Some(match total {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    let total = total.expect("five terms");
    let breakdown = LossBreakdown {
        hole: tape.scalar(terms.hole)?,
        valid: tape.scalar(terms.valid)?,
        adv: tape.scalar(terms.adv)?,
        perceptual: tape.scalar(terms.perceptual)?,
        edge: tape.scalar(terms.edge)?,
        total: tape.scalar(total)?,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_vars(tape: &mut Tape, h: usize, w: usize, hole: impl Fn(usize, usize) -> bool) -> MaskVars {
        let m = Tensor::from_fn(&[1, h, w, 1], |i| f64::from(u8::from(hole(i / w, i % w))));
        MaskVars::new(tape, &m).unwrap()
    }

    #[test]
    fn content_loss_cases() {
        let mut tape = Tape::new();
        let gt = tape.constant(Tensor::from_fn(&[1, 4, 4, 3], |i| (i % 7) as f64 / 7.0));
        let mv = mask_vars(&mut tape, 4, 4, |y, x| y < 2 && x < 2);
        let (h, v) = content_loss(&mut tape, gt, gt, gt, &mv).unwrap();
        assert_eq!((tape.scalar(h).unwrap(), tape.scalar(v).unwrap()), (0.0, 0.0));

        let shifted = tape.add_scalar(gt, 0.5);
        let (h, _) = content_loss(&mut tape, gt, shifted, gt, &mv).unwrap();
        assert!((tape.scalar(h).unwrap() - 0.125).abs() < 1e-15);

        let none = mask_vars(&mut tape, 4, 4, |_, _| false);
        let (h, v) = content_loss(&mut tape, shifted, shifted, gt, &none).unwrap();
        assert_eq!(tape.scalar(h).unwrap(), 0.0);
        assert!((tape.scalar(v).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gan_losses_at_zero_logits() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[1, 2, 2, 1]));
        let d = gan_loss_d(&mut tape, z, z, GanLoss::Vanilla).unwrap();
        let g = gan_loss_g(&mut tape, z, GanLoss::Vanilla).unwrap();
        assert!((tape.scalar(d).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((tape.scalar(g).unwrap() - 2f64.ln()).abs() < 1e-15);
        let grads = tape.backward(g).unwrap();
        assert!(grads.wrt(z).unwrap().data().iter().all(|&v| (v + 0.5 / 4.0).abs() < 1e-15));
    }

    #[test]
    fn perfect_discriminator_limit() {
        let mut tape = Tape::new();
        let real = tape.constant(Tensor::full(&[4], 800.0));
        let fake = tape.constant(Tensor::full(&[4], -800.0));
        let d = gan_loss_d(&mut tape, real, fake, GanLoss::Vanilla).unwrap();
        assert!(tape.scalar(d).unwrap() < 1e-300);
        let g = gan_loss_g(&mut tape, fake, GanLoss::Vanilla).unwrap();
        assert!((tape.scalar(g).unwrap() - 800.0).abs() < 1e-9);
    }

    #[test]
    fn weights_validation() {
        LossWeights::default().validate().unwrap();
        let zero = LossWeights {
            hole: 0.0,
            valid: 0.0,
            adv: 0.0,
            perceptual: 0.0,
            edge: 0.0,
        };
        assert!(zero.validate().is_err());
        assert!(LossWeights { hole: f64::NAN, ..zero }.validate().is_err());
    }

    #[test]
    fn extractor_is_seeded() {
        assert_eq!(FeatureExtractor::new(5), FeatureExtractor::new(5));
        assert_ne!(FeatureExtractor::new(5), FeatureExtractor::new(6));
    }

    #[test]
    fn sobel_kernel_orientation() {
        let k = sobel_kernel(2, false);
        assert_eq!(k.at(&[1, 2, 1, 1]), 2.0);
        assert_eq!(k.at(&[1, 2, 0, 1]), 0.0);
        let k = sobel_kernel(1, true);
        assert_eq!(k.at(&[2, 1, 0, 0]), 2.0);
    }
}
