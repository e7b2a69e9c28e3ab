//! Binary PGM (P5) and PPM (P6) with maxval 255.
//!
//! Pixels map to `[0, 1]` as `v / 255` on read and `round(v · 255)` (clamped)
//! on write. Masks are stored as P5 with 255 marking a hole.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::Codec("malformed header: expected P5 or P6 magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Codec("malformed header: unexpected end".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Codec("malformed header: expected a decimal number".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Codec("malformed header: number out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Codec("malformed header: missing separator before payload".into()));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(Error::Codec("malformed header: zero dimension".into()));
    }
    Ok(Header {
        channels,
        width: width as usize,
        height: height as usize,
        payload: pos + 1,
    })
}

/// Decodes a P5/P6 file into `[height, width, channels]`.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height * h.channels;
    let payload = &bytes[h.payload..];
    if payload.len() < n {
        return Err(Error::Codec(format!(
            "truncated payload: expected {n} bytes, found {}",
            payload.len()
        )));
    }
    let data = payload[..n].iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(&[h.height, h.width, h.channels], data)
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn image_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] | [1, h, w, c] if c == 1 || c == 3 => Ok((h, w, c)),
        _ => Err(Error::invalid_shape(t.shape(), "expected [h,w,1|3] or [1,h,w,1|3]")),
    }
}

/// Encodes one- or three-channel images as P5 or P6.
pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let (h, w, c) = image_dims(t)?;
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(t.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&fs::read(path)?)
}

pub fn write_image(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

/// Reads a P5 mask; values of 128 and above are holes.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Tensor> {
    let t = read_image(path)?;
    if t.shape()[2] != 1 {
        return Err(Error::Codec("mask must be a single-channel P5 image".into()));
    }
    Ok(t.map(|v| f64::from(u8::from(v >= 0.5))))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Tensor) -> Result<()> {
    write_image(path, &mask.map(|v| f64::from(u8::from(v > 0.5))))
}
