//! Hole masks: the centered square and free-form brush strokes.
//!
//! Masks are `[size, size, 1]` tensors with 1 marking a hole pixel.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Center,
    Brush,
}

impl std::str::FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(MaskKind::Center),
            "brush" => Ok(MaskKind::Brush),
            _ => Err(Error::InvalidArgument(format!("unknown mask kind {s:?}"))),
        }
    }
}

/// Stroke geometry; lengths and widths are fractions of the image side.
#[derive(Debug, Clone, PartialEq)]
pub struct BrushParams {
    pub vertices: (usize, usize),
    pub width: (f64, f64),
    pub segment_length: (f64, f64),
    pub spot_radius: (f64, f64),
    /// Probability that a mark is a round spot instead of a stroke.
    pub spot_probability: f64,
    /// Maximum heading change between consecutive segments, in radians.
    pub angle_jitter: f64,
    pub max_retries: usize,
}

impl Default for BrushParams {
    fn default() -> Self {
        BrushParams {
            vertices: (2, 6),
            width: (0.04, 0.12),
            segment_length: (0.08, 0.25),
            spot_radius: (0.03, 0.08),
            spot_probability: 0.2,
            angle_jitter: PI / 3.0,
            max_retries: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub image_size: usize,
    pub ratio_range: (f64, f64),
    pub brush: BrushParams,
    pub seed: u64,
}

impl MaskSpec {
    pub fn brush(image_size: usize, ratio_range: (f64, f64), seed: u64) -> Self {
        MaskSpec {
            kind: MaskKind::Brush,
            image_size,
            ratio_range,
            brush: BrushParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.ratio_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Mask(format!("ratio range [{lo}, {hi}] must satisfy 0 < lo <= hi < 1")));
        }
        if self.image_size < 2 {
            return Err(Error::Mask("image size must be at least 2".into()));
        }
        let b = &self.brush;
        if b.vertices.0 < 2 || b.vertices.0 > b.vertices.1 || b.width.0 > b.width.1 || b.width.0 <= 0.0 {
            return Err(Error::Mask(format!("invalid brush parameters {b:?}")));
        }
        Ok(())
    }
}

pub fn hole_ratio(mask: &Tensor) -> f64 {
    mask.data().iter().filter(|&&v| v > 0.5).count() as f64 / mask.len() as f64
}

/// Centered `size/2 × size/2` hole covering exactly a quarter of the pixels.
pub fn gen_center_mask(size: usize) -> Result<Tensor> {
    if size == 0 || size % 2 != 0 {
        return Err(Error::Mask(format!("center mask needs an even size, got {size}")));
    }
    let (lo, hi) = (size / 4, size / 4 + size / 2);
    Ok(Tensor::from_fn(&[size, size, 1], |i| {
        let (y, x) = (i / size, i % size);
        f64::from(u8::from((lo..hi).contains(&y) && (lo..hi).contains(&x)))
    }))
}

struct Canvas {
    size: usize,
    pixels: Vec<bool>,
    filled: usize,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Canvas {
            size,
            pixels: vec![false; size * size],
            filled: 0,
        }
    }

    fn ratio(&self) -> f64 {
        self.filled as f64 / self.pixels.len() as f64
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64) {
        let s = self.size as isize;
        let y0 = ((cy - r).floor() as isize).max(0);
        let y1 = ((cy + r).ceil() as isize).min(s - 1);
        let x0 = ((cx - r).floor() as isize).max(0);
        let x1 = ((cx + r).ceil() as isize).min(s - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    let p = &mut self.pixels[y as usize * self.size + x as usize];
                    if !*p {
                        *p = true;
                        self.filled += 1;
                    }
                }
            }
        }
    }

    /// Thick segment with round caps, stamped as overlapping discs.
    fn segment(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), r: f64) {
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let steps = (len / 0.5).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.disc(x0 + t * (x1 - x0), y0 + t * (y1 - y0), r);
        }
    }

    fn into_tensor(self) -> Tensor {
        let size = self.size;
        let data = self.pixels.into_iter().map(|p| f64::from(u8::from(p))).collect();
        Tensor::new(&[size, size, 1], data).expect("canvas shape")
    }
}

enum Attempt {
    Hit(Canvas),
    Overshoot(f64),
}

fn attempt(spec: &MaskSpec, rng: &mut ChaCha8Rng) -> Attempt {
    let size = spec.image_size as f64;
    let b = &spec.brush;
    let (lo, hi) = spec.ratio_range;
    let mut canvas = Canvas::new(spec.image_size);
    let done = |c: &Canvas| c.ratio() >= lo;
    loop {
        if rng.gen_bool(b.spot_probability) {
            let r = rng.gen_range(b.spot_radius.0..=b.spot_radius.1) * size;
            canvas.disc(rng.gen_range(0.0..size), rng.gen_range(0.0..size), r);
        } else {
            let vertices = rng.gen_range(b.vertices.0..=b.vertices.1);
            let r = 0.5 * rng.gen_range(b.width.0..=b.width.1) * size;
            let mut p = (rng.gen_range(0.0..size), rng.gen_range(0.0..size));
            let mut heading = rng.gen_range(0.0..2.0 * PI);
            for _ in 1..vertices {
                heading += rng.gen_range(-b.angle_jitter..=b.angle_jitter);
                let len = rng.gen_range(b.segment_length.0..=b.segment_length.1) * size;
                let next = (
                    (p.0 + len * heading.cos()).clamp(0.0, size),
                    (p.1 + len * heading.sin()).clamp(0.0, size),
                );
                canvas.segment(p, next, r);
                p = next;
                if done(&canvas) {
                    break;
                }
            }
        }
        if done(&canvas) {
            let ratio = canvas.ratio();
            return if ratio <= hi {
                Attempt::Hit(canvas)
            } else {
                Attempt::Overshoot(ratio)
            };
        }
    }
}

/// Random strokes and spots until the hole ratio lands in `spec.ratio_range`.
pub fn gen_brush_mask(spec: &MaskSpec) -> Result<Tensor> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last = 0.0;
    for _ in 0..spec.brush.max_retries.max(1) {
        match attempt(spec, &mut rng) {
            Attempt::Hit(c) => return Ok(c.into_tensor()),
            Attempt::Overshoot(r) => last = r,
        }
    }
    Err(Error::Mask(format!(
        "no mask in [{}, {}] after {} attempts (last ratio {last:.4})",
        spec.ratio_range.0, spec.ratio_range.1, spec.brush.max_retries
    )))
}

pub fn gen_mask(spec: &MaskSpec) -> Result<Tensor> {
    match spec.kind {
        MaskKind::Center => gen_center_mask(spec.image_size),
        MaskKind::Brush => gen_brush_mask(spec),
    }
}
