//! Raw numeric kernels shared by the tape and by non-differentiable callers.
//!
//! Every output element is accumulated by exactly one task in a fixed order, so
//! results do not depend on the number of worker threads.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero fill so that `out = ceil(in / stride)`.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub c_in: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn out_extent(input: usize, k: usize, stride: usize, dilation: usize, padding: Padding) -> Option<(usize, usize)> {
    let span = (k - 1) * dilation + 1;
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = ((out - 1) * stride + span).saturating_sub(input);
            Some((out, needed / 2))
        }
        Padding::Valid => {
            if input < span {
                None
            } else {
                Some(((input - span) / stride + 1, 0))
            }
        }
    }
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        stride: usize,
        dilation: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (batch, in_h, in_w, c_in) = match *input {
            [b, h, w, c] => (b, h, w, c),
            _ => return Err(Error::invalid_shape(input, "conv2d input must be [b,h,w,c]")),
        };
        let (k, c_out) = match *kernel {
            [kh, kw, ci, co] if kh == kw && ci == c_in => (kh, co),
            _ => return Err(Error::shape("conv2d", input, kernel)),
        };
        if stride == 0 || dilation == 0 {
            return Err(Error::InvalidArgument(
                "conv2d stride and dilation must be at least 1".into(),
            ));
        }
        let (out_h, pad_top) = out_extent(in_h, k, stride, dilation, padding)
            .ok_or_else(|| Error::invalid_shape(input, "input smaller than dilated kernel"))?;
        let (out_w, pad_left) = out_extent(in_w, k, stride, dilation, padding)
            .ok_or_else(|| Error::invalid_shape(input, "input smaller than dilated kernel"))?;
        Ok(ConvGeometry {
            batch,
            in_h,
            in_w,
            c_in,
            out_h,
            out_w,
            c_out,
            k,
            stride,
            dilation,
            pad_top,
            pad_left,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_h, self.out_w, self.c_out]
    }

    /// Input coordinate sampled by output `o` at kernel tap `t`, if inside the image.
    #[inline]
    fn src(o: usize, t: usize, stride: usize, dilation: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + t * dilation) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Output coordinate that reads input `i` at kernel tap `t`, if any.
    #[inline]
    fn dst(i: usize, t: usize, stride: usize, dilation: usize, pad: usize, extent: usize) -> Option<usize> {
        let shifted = (i + pad) as isize - (t * dilation) as isize;
        if shifted < 0 || shifted as usize % stride != 0 {
            return None;
        }
        let o = shifted as usize / stride;
        (o < extent).then_some(o)
    }
}

/// Cross-correlation with dilation; `bias` may be omitted.
pub fn conv2d_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeometry) -> Vec<f64> {
    let row = g.out_w * g.c_out;
    let mut out = vec![0.0; g.batch * g.out_h * row];
    par::for_each_chunk(&mut out, row, |r, chunk| {
        let b = r / g.out_h;
        let oy = r % g.out_h;
        for ox in 0..g.out_w {
            let acc = &mut chunk[ox * g.c_out..(ox + 1) * g.c_out];
            if let Some(bias) = bias {
                acc.copy_from_slice(bias);
            }
            for ky in 0..g.k {
                let Some(iy) = ConvGeometry::src(oy, ky, g.stride, g.dilation, g.pad_top, g.in_h) else {
                    continue;
                };
                for kx in 0..g.k {
                    let Some(ix) = ConvGeometry::src(ox, kx, g.stride, g.dilation, g.pad_left, g.in_w) else {
                        continue;
                    };
                    let xo = ((b * g.in_h + iy) * g.in_w + ix) * g.c_in;
                    let wo = (ky * g.k + kx) * g.c_in * g.c_out;
                    for ci in 0..g.c_in {
                        let a = x[xo + ci];
                        let wrow = &w[wo + ci * g.c_out..wo + (ci + 1) * g.c_out];
                        for (o, &wv) in acc.iter_mut().zip(wrow) {
                            *o += a * wv;
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradient of the convolution with respect to its input.
pub fn conv2d_backward_input(gout: &[f64], w: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let row = g.in_w * g.c_in;
    let mut gin = vec![0.0; g.batch * g.in_h * row];
    par::for_each_chunk(&mut gin, row, |r, chunk| {
        let b = r / g.in_h;
        let iy = r % g.in_h;
        for ix in 0..g.in_w {
            let acc = &mut chunk[ix * g.c_in..(ix + 1) * g.c_in];
            for ky in 0..g.k {
                let Some(oy) = ConvGeometry::dst(iy, ky, g.stride, g.dilation, g.pad_top, g.out_h) else {
                    continue;
                };
                for kx in 0..g.k {
                    let Some(ox) = ConvGeometry::dst(ix, kx, g.stride, g.dilation, g.pad_left, g.out_w) else {
                        continue;
                    };
                    let go = ((b * g.out_h + oy) * g.out_w + ox) * g.c_out;
                    let grow = &gout[go..go + g.c_out];
                    let wo = (ky * g.k + kx) * g.c_in * g.c_out;
                    for (ci, a) in acc.iter_mut().enumerate() {
                        let wrow = &w[wo + ci * g.c_out..wo + (ci + 1) * g.c_out];
                        let mut dot = 0.0;
                        for (&gv, &wv) in grow.iter().zip(wrow) {
                            dot += gv * wv;
                        }
                        *a += dot;
                    }
                }
            }
        }
    });
    gin
}

/// Gradient of the convolution with respect to its kernel.
pub fn conv2d_backward_kernel(gout: &[f64], x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let tap = g.c_in * g.c_out;
    let mut gw = vec![0.0; g.k * g.k * tap];
    par::for_each_chunk(&mut gw, tap, |t, chunk| {
        let ky = t / g.k;
        let kx = t % g.k;
        for b in 0..g.batch {
            for oy in 0..g.out_h {
                let Some(iy) = ConvGeometry::src(oy, ky, g.stride, g.dilation, g.pad_top, g.in_h) else {
                    continue;
                };
                for ox in 0..g.out_w {
                    let Some(ix) = ConvGeometry::src(ox, kx, g.stride, g.dilation, g.pad_left, g.in_w) else {
                        continue;
                    };
                    let xo = ((b * g.in_h + iy) * g.in_w + ix) * g.c_in;
                    let go = ((b * g.out_h + oy) * g.out_w + ox) * g.c_out;
                    let grow = &gout[go..go + g.c_out];
                    for ci in 0..g.c_in {
                        let a = x[xo + ci];
                        let acc = &mut chunk[ci * g.c_out..(ci + 1) * g.c_out];
                        for (o, &gv) in acc.iter_mut().zip(grow) {
                            *o += a * gv;
                        }
                    }
                }
            }
        }
    });
    gw
}

/// Gradient of the convolution with respect to its bias.
pub fn conv2d_backward_bias(gout: &[f64], c_out: usize) -> Vec<f64> {
    let mut gb = vec![0.0; c_out];
    for px in gout.chunks_exact(c_out) {
        for (o, &g) in gb.iter_mut().zip(px) {
            *o += g;
        }
    }
    gb
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    par::for_each_chunk(&mut out, n, |i, row| {
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    });
    Tensor::new(&[m, n], out)
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (b, h, w, c) = x.dims4()?;
    let n = (h * w) as f64;
    let mut out = vec![0.0; b * c];
    for bi in 0..b {
        let acc = &mut out[bi * c..(bi + 1) * c];
        for px in x.data()[bi * h * w * c..(bi + 1) * h * w * c].chunks_exact(c) {
            for (o, &v) in acc.iter_mut().zip(px) {
                *o += v;
            }
        }
        for o in acc.iter_mut() {
            *o /= n;
        }
    }
    Tensor::new(&[b, 1, 1, c], out)
}

pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsample factor must be at least 1".into()));
    }
    let (b, h, w, c) = x.dims4()?;
    let (oh, ow) = (h * factor, w * factor);
    let xd = x.data();
    let mut out = vec![0.0; b * oh * ow * c];
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let src = ((bi * h + oy / factor) * w + ox / factor) * c;
                let dst = ((bi * oh + oy) * ow + ox) * c;
                out[dst..dst + c].copy_from_slice(&xd[src..src + c]);
            }
        }
    }
    Tensor::new(&[b, oh, ow, c], out)
}

/// Adjoint of [`upsample_nearest`]: sums each `factor × factor` block.
pub fn upsample_nearest_backward(g: &Tensor, factor: usize) -> Result<Tensor> {
    let (b, oh, ow, c) = g.dims4()?;
    let (h, w) = (oh / factor, ow / factor);
    let gd = g.data();
    let mut out = vec![0.0; b * h * w * c];
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let src = ((bi * oh + oy) * ow + ox) * c;
                let dst = ((bi * h + oy / factor) * w + ox / factor) * c;
                for ch in 0..c {
                    out[dst + ch] += gd[src + ch];
                }
            }
        }
    }
    Tensor::new(&[b, h, w, c], out)
}

/// Plain (tape-free) convolution on tensors.
pub fn conv2d(
    x: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    dilation: usize,
    padding: Padding,
) -> Result<Tensor> {
    let g = ConvGeometry::new(x.shape(), kernel.shape(), stride, dilation, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.c_out] {
            return Err(Error::shape("conv2d bias", b.shape(), &[g.c_out]));
        }
    }
    let out = conv2d_forward(x.data(), kernel.data(), bias.map(|b| b.data()), &g);
    Tensor::new(&g.output_shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_extents() {
        let g = ConvGeometry::new(&[1, 32, 32, 4], &[3, 3, 4, 8], 2, 1, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w, g.pad_top), (16, 16, 0));
        let g = ConvGeometry::new(&[1, 8, 8, 4], &[3, 3, 4, 8], 1, 4, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (8, 4));
        let g = ConvGeometry::new(&[1, 5, 5, 1], &[3, 3, 1, 1], 1, 1, Padding::Valid).unwrap();
        assert_eq!((g.out_h, g.out_w), (3, 3));
    }

    #[test]
    fn kernel_channel_mismatch_names_both_shapes() {
        let err = ConvGeometry::new(&[1, 4, 4, 3], &[3, 3, 2, 8], 1, 1, Padding::Same).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 4, 4, 3]") && msg.contains("[3, 3, 2, 8]"), "{msg}");
    }

    #[test]
    fn valid_padding_rejects_small_input() {
        assert!(ConvGeometry::new(&[1, 2, 2, 1], &[3, 3, 1, 1], 1, 1, Padding::Valid).is_err());
    }

    /// Brute-force adjoint check: <conv(x), g> == <x, conv_T(g)> for strided dilated conv.
    #[test]
    fn backward_input_is_adjoint() {
        let x = Tensor::from_fn(&[2, 7, 6, 3], |i| ((i * 37 % 11) as f64 - 5.0) / 7.0);
        let w = Tensor::from_fn(&[3, 3, 3, 4], |i| ((i * 13 % 7) as f64 - 3.0) / 5.0);
        for (stride, dil) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            let g = ConvGeometry::new(x.shape(), w.shape(), stride, dil, Padding::Same).unwrap();
            let y = conv2d_forward(x.data(), w.data(), None, &g);
            let gy: Vec<f64> = (0..y.len()).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
            let lhs: f64 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();
            let gx = conv2d_backward_input(&gy, w.data(), &g);
            let rhs: f64 = x.data().iter().zip(&gx).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "stride {stride} dil {dil}: {lhs} vs {rhs}");
            let gw = conv2d_backward_kernel(&gy, x.data(), &g);
            let rhs_w: f64 = w.data().iter().zip(&gw).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs_w).abs() < 1e-9);
        }
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let g = Tensor::ones(&[1, 4, 4, 2]);
        let back = upsample_nearest_backward(&g, 2).unwrap();
        assert!(back.data().iter().all(|&v| v == 4.0));
    }
}
