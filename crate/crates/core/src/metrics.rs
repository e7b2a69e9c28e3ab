//! PSNR, single-scale SSIM and L1/L2 error percentages.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.same_shape("mse", b)?;
    let s = a
        .data()
        .iter()
        .zip(b.data())
        .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y));
    Ok(s / a.len() as f64)
}

/// `10 log10(peak² / MSE)`; `+∞` for identical images.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / m).log10()
    })
}

/// Mean absolute difference as a percentage of the unit range.
pub fn l1_percent(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.same_shape("l1", b)?;
    let s = a.data().iter().zip(b.data()).fold(0.0, |acc, (x, y)| acc + (x - y).abs());
    Ok(100.0 * s / a.len() as f64)
}

/// Mean squared difference as a percentage of the unit range.
pub fn l2_percent(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(100.0 * mse(a, b)?)
}

fn grayscale(t: &Tensor) -> Result<(usize, usize, Vec<f64>)> {
    let (h, w, c) = match *t.shape() {
        [h, w, c] | [1, h, w, c] => (h, w, c),
        _ => return Err(Error::invalid_shape(t.shape(), "expected [h,w,c] or [1,h,w,c]")),
    };
    let g = t
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().fold(0.0, |a, &v| a + v) / c as f64)
        .collect();
    Ok((h, w, g))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let norm: f64 = g.iter().sum();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for &gy in &g {
        for &gx in &g {
            w.push(gy * gx / (norm * norm));
        }
    }
    w
}

/// Mean SSIM over every fully contained 11×11 Gaussian window of the channel-mean images.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.same_shape("ssim", b)?;
    let (h, w, ga) = grayscale(a)?;
    let (_, _, gb) = grayscale(b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid_shape(a.shape(), "image smaller than the 11x11 SSIM window"));
    }
    let win = gaussian_window();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wt = win[ky * SSIM_WINDOW + kx];
                    let i = (y + ky) * w + x + kx;
                    let (va, vb) = (ga[i], gb[i]);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
            total += num / den;
        }
    }
    Ok(total / (oh * ow) as f64)
}

pub const BUCKETS: [&str; 5] = ["0.1-0.2", "0.2-0.3", "0.3-0.4", "0.4-0.5", "0.5-0.6"];

/// Evaluation bucket for a hole ratio, or `None` outside `[0.1, 0.6]`.
pub fn bucket_label(ratio: f64) -> Option<&'static str> {
    if !(0.1..=0.6).contains(&ratio) {
        return None;
    }
    let idx = (((ratio - 0.1) * 10.0 + 1e-9).floor() as usize).min(BUCKETS.len() - 1);
    Some(BUCKETS[idx])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub hole_ratio: f64,
    pub bucket: String,
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub l2: f64,
}

impl EvalRow {
    /// Scores `prediction` against `truth` for one image.
    pub fn score(id: impl Into<String>, prediction: &Tensor, truth: &Tensor, hole_ratio: f64) -> Result<Self> {
        Ok(EvalRow {
            id: id.into(),
            hole_ratio,
            bucket: bucket_label(hole_ratio).unwrap_or("other").to_string(),
            psnr: psnr(prediction, truth, 1.0)?,
            ssim: ssim(prediction, truth)?,
            l1: l1_percent(prediction, truth)?,
            l2: l2_percent(prediction, truth)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketMean {
    pub bucket: String,
    pub count: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Builds a report with rows sorted by id.
    pub fn new(mut rows: Vec<EvalRow>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        EvalReport { rows }
    }

    /// Scores image pairs in parallel; row order follows ids.
    pub fn evaluate(items: &[(String, Tensor, Tensor, f64)]) -> Result<Self> {
        let rows = par::map_indexed(items.len(), |i| {
            let (id, pred, truth, ratio) = &items[i];
            EvalRow::score(id.clone(), pred, truth, *ratio)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(rows))
    }

    /// Per-bucket means in `BUCKETS` order, then `other` if present.
    pub fn aggregate(&self) -> Vec<BucketMean> {
        BUCKETS
            .iter()
            .copied()
            .chain(std::iter::once("other"))
            .filter_map(|b| {
                let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.bucket == b).collect();
                if rows.is_empty() {
                    return None;
                }
                let n = rows.len() as f64;
                let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
                Some(BucketMean {
                    bucket: b.to_string(),
                    count: rows.len(),
                    psnr: mean(|r| r.psnr),
                    ssim: mean(|r| r.ssim),
                    l1: mean(|r| r.l1),
                    l2: mean(|r| r.l2),
                })
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,bucket,hole_ratio,psnr,ssim,l1,l2\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{:.6},{:.6},{:.6}",
                r.id,
                r.bucket,
                r.hole_ratio,
                fmt_psnr(r.psnr),
                r.ssim,
                r.l1,
                r.l2
            );
        }
        for m in self.aggregate() {
            let _ = writeln!(
                out,
                "mean[n={}],{},,{},{:.6},{:.6},{:.6}",
                m.count,
                m.bucket,
                fmt_psnr(m.psnr),
                m.ssim,
                m.l1,
                m.l2
            );
        }
        out
    }
}

fn fmt_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p:.4}")
    }
}
