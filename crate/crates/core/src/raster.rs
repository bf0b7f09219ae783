//! Interleaved 8-bit image buffers and the sampling primitives shared by
//! preprocessing and augmentation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("image has zero size ({width}x{height})")]
    ZeroSize { width: u32, height: u32 },
    #[error("unsupported channel count {0}")]
    Channels(u8),
    #[error("buffer holds {got} bytes, expected {expected}")]
    BufferLength { got: usize, expected: usize },
}

/// A decoded image with 1 (gray), 2 (gray+alpha), 3 (RGB) or 4 (RGBA)
/// interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RawImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, RasterError> {
        if !(1..=4).contains(&channels) {
            return Err(RasterError::Channels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(RasterError::BufferLength { got: data.len(), expected });
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

impl From<RgbImage> for RawImage {
    fn from(img: RgbImage) -> Self {
        Self { width: img.width, height: img.height, channels: 3, data: img.data }
    }
}

/// Row-major interleaved RGB, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(RasterError::BufferLength { got: data.len(), expected });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(x, self.height - 1 - y))
    }

    /// Bilinear sample at continuous pixel-center coordinates. Taps that
    /// fall outside the frame are resolved by `fill`.
    pub fn sample(&self, fx: f64, fy: f64, fill: FillMode) -> [f64; 3] {
        let (w, h) = (self.width as i64, self.height as i64);
        let x0 = libm::floor(fx);
        let y0 = libm::floor(fy);
        let ax = fx - x0;
        let ay = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut acc = [0.0f64; 3];
        for (dy, wy) in [(0i64, 1.0 - ay), (1, ay)] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0i64, 1.0 - ax), (1, ax)] {
                if wx == 0.0 {
                    continue;
                }
                let px = match fill.resolve(x0 + dx, w).zip(fill.resolve(y0 + dy, h)) {
                    Some((x, y)) => self.pixel(x as u32, y as u32),
                    None => match fill {
                        FillMode::Constant(v) => [v; 3],
                        _ => unreachable!("only constant fill leaves the frame"),
                    },
                };
                let wgt = wx * wy;
                for c in 0..3 {
                    acc[c] += wgt * px[c] as f64;
                }
            }
        }
        acc
    }
}

/// How coordinates that fall outside the frame are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    /// Replicate the nearest edge pixel.
    #[default]
    Nearest,
    /// Mirror about the edge (`dcb|abcd|cba`).
    Reflect,
    /// Uniform gray level.
    Constant(u8),
}

impl FillMode {
    fn resolve(self, i: i64, n: i64) -> Option<i64> {
        if (0..n).contains(&i) {
            return Some(i);
        }
        match self {
            FillMode::Nearest => Some(i.clamp(0, n - 1)),
            FillMode::Reflect => {
                if n == 1 {
                    return Some(0);
                }
                let period = 2 * n;
                let m = i.rem_euclid(period);
                Some(if m < n { m } else { period - 1 - m })
            }
            FillMode::Constant(_) => None,
        }
    }
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    libm::round(v).clamp(0.0, 255.0) as u8
}

/// Bilinear resize with half-pixel-center alignment. Resizing to the same
/// size reproduces the input exactly.
pub fn resize(img: &RgbImage, width: u32, height: u32) -> Result<RgbImage, RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroSize { width, height });
    }
    if img.width == 0 || img.height == 0 {
        return Err(RasterError::ZeroSize { width: img.width, height: img.height });
    }
    if (width, height) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    // shrinking by more than 2x averages over a box first to limit aliasing
    let src = if sx > 2.0 || sy > 2.0 {
        let fx = (libm::floor(sx / 2.0) as u32).max(1);
        let fy = (libm::floor(sy / 2.0) as u32).max(1);
        box_reduce(img, fx, fy)
    } else {
        img.clone()
    };
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    Ok(RgbImage::from_fn(width, height, |x, y| {
        let fx = (x as f64 + 0.5) * sx - 0.5;
        let fy = (y as f64 + 0.5) * sy - 0.5;
        src.sample(fx, fy, FillMode::Nearest).map(quantize)
    }))
}

/// Integer-factor box downsampling; edge blocks may be partial.
fn box_reduce(img: &RgbImage, fx: u32, fy: u32) -> RgbImage {
    let w = img.width.div_ceil(fx);
    let h = img.height.div_ceil(fy);
    let mut sums = vec![[0u32; 4]; w as usize * h as usize];
    for y in 0..img.height {
        for x in 0..img.width {
            let p = img.pixel(x, y);
            let s = &mut sums[(y / fy) as usize * w as usize + (x / fx) as usize];
            for c in 0..3 {
                s[c] += p[c] as u32;
            }
            s[3] += 1;
        }
    }
    RgbImage::from_fn(w, h, |x, y| {
        let s = sums[y as usize * w as usize + x as usize];
        let n = s[3];
        [0, 1, 2].map(|c| ((s[c] + n / 2) / n) as u8)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| [(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8])
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = gradient(31, 17);
        assert_eq!(resize(&img, 31, 17).unwrap(), img);
    }

    #[test]
    fn resize_hits_target_dims() {
        let img = gradient(512, 512);
        let out = resize(&img, 256, 256).unwrap();
        assert_eq!((out.width(), out.height()), (256, 256));
        let out = resize(&gradient(5, 3), 224, 224).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
        assert!(resize(&img, 0, 5).is_err());
    }

    #[test]
    fn constant_image_resizes_to_constant() {
        let img = RgbImage::filled(300, 200, [10, 200, 33]);
        assert_eq!(resize(&img, 224, 224).unwrap(), RgbImage::filled(224, 224, [10, 200, 33]));
        assert_eq!(resize(&img, 1000, 9).unwrap(), RgbImage::filled(1000, 9, [10, 200, 33]));
    }

    #[test]
    fn flips_are_involutions() {
        let img = gradient(9, 4);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
        assert_eq!(img.flip_horizontal().pixel(0, 0), img.pixel(8, 0));
    }

    #[test]
    fn fill_modes() {
        let img = RgbImage::from_fn(3, 1, |x, _| [x as u8 * 10; 3]);
        assert_eq!(img.sample(-2.0, 0.0, FillMode::Nearest), [0.0; 3]);
        assert_eq!(img.sample(4.0, 0.0, FillMode::Nearest), [20.0; 3]);
        assert_eq!(img.sample(-1.0, 0.0, FillMode::Reflect), [0.0; 3]);
        assert_eq!(img.sample(3.0, 0.0, FillMode::Reflect), [20.0; 3]);
        assert_eq!(img.sample(-2.0, 0.0, FillMode::Reflect), [10.0; 3]);
        assert_eq!(img.sample(-1.0, 0.0, FillMode::Constant(7)), [7.0; 3]);
        assert_eq!(img.sample(0.5, 0.0, FillMode::Nearest), [5.0; 3]);
    }

    #[test]
    fn raw_image_validation() {
        assert!(RawImage::new(2, 2, 5, alloc::vec![0; 20]).is_err());
        assert!(RawImage::new(2, 2, 3, alloc::vec![0; 11]).is_err());
        assert!(RawImage::new(2, 2, 4, alloc::vec![0; 16]).is_ok());
    }
}
