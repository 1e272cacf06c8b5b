//! Minimal float image and binary mask buffers shared by rendering,
//! propagation, and baking. Encoding/decoding to file formats lives in the
//! companion crate.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;

/// Row-major RGB image with channels in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    pub width: u32,
    pub height: u32,
    /// `height * width` RGB texels, row-major from the top-left.
    pub data: Vec<[f32; 3]>,
}

impl ImageBuf {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: [f32; 3]) {
        let i = self.idx(x, y);
        self.data[i] = c;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// half-integers), clamping to the image border.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> [f32; 3] {
        let (x0, y0, x1, y1, fx, fy) = bilinear_setup(self.width, self.height, u, v);
        let c00 = self.get(x0, y0);
        let c10 = self.get(x1, y0);
        let c01 = self.get(x0, y1);
        let c11 = self.get(x1, y1);
        let mut out = [0.0f32; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let top = c00[k] as f64 * (1.0 - fx) + c10[k] as f64 * fx;
            let bot = c01[k] as f64 * (1.0 - fx) + c11[k] as f64 * fx;
            *o = (top * (1.0 - fy) + bot * fy) as f32;
        }
        out
    }
}

/// Row-major single-channel f32 buffer (confidence maps, weight planes).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarBuf {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl ScalarBuf {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        let i = self.idx(x, y);
        self.data[i] = v;
    }

    /// Bilinear sample with border clamping; see [`ImageBuf::sample_bilinear`].
    pub fn sample_bilinear(&self, u: f64, v: f64) -> f32 {
        let (x0, y0, x1, y1, fx, fy) = bilinear_setup(self.width, self.height, u, v);
        let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
        let bot = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
        (top * (1.0 - fy) + bot * fy) as f32
    }
}

/// Row-major binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = self.idx(x, y);
        self.data[i] = v;
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Shared bilinear interpolation indices/weights for half-integer-centered
/// sampling with border clamping.
fn bilinear_setup(width: u32, height: u32, u: f64, v: f64) -> (u32, u32, u32, u32, f64, f64) {
    let x = u - 0.5;
    let y = v - 0.5;
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = (x - x0f).clamp(0.0, 1.0);
    let fy = (y - y0f).clamp(0.0, 1.0);
    let clamp_x = |t: f64| -> u32 { t.max(0.0).min((width - 1) as f64) as u32 };
    let clamp_y = |t: f64| -> u32 { t.max(0.0).min((height - 1) as f64) as u32 };
    let x0 = clamp_x(x0f);
    let y0 = clamp_y(y0f);
    let x1 = clamp_x(x0f + 1.0);
    let y1 = clamp_y(y0f + 1.0);
    (x0, y0, x1, y1, fx, fy)
}

/// Elementwise masked blend `out = known * mask + fill * (1 - mask)`.
///
/// `mask` entries are expected to be 0 or 1; fractional values interpolate.
/// All three slices must have identical length.
pub fn masked_blend(known: &[f32], fill: &[f32], mask: &[f32]) -> Result<Vec<f32>, Error> {
    if known.len() != fill.len() || known.len() != mask.len() {
        return Err(Error::ShapeMismatch("masked_blend operands differ in length"));
    }
    Ok(known
        .iter()
        .zip(fill)
        .zip(mask)
        .map(|((&k, &f), &m)| k * m + f * (1.0 - m))
        .collect())
}

/// [`masked_blend`] over RGB images with a single-channel binary mask.
pub fn masked_blend_image(
    known: &ImageBuf,
    fill: &ImageBuf,
    mask: &BinaryMask,
) -> Result<ImageBuf, Error> {
    if !known.same_shape(fill) || known.width != mask.width || known.height != mask.height {
        return Err(Error::ShapeMismatch("masked_blend_image shapes differ"));
    }
    let mut out = ImageBuf::new(known.width, known.height);
    for (i, o) in out.data.iter_mut().enumerate() {
        let m = if mask.data[i] { 1.0f32 } else { 0.0f32 };
        for k in 0..3 {
            o[k] = known.data[i][k] * m + fill.data[i][k] * (1.0 - m);
        }
    }
    Ok(out)
}
