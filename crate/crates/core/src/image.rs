//! 8-bit rasters and binary masks.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Interleaved 8-bit image with one (gray) or three (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("image dimensions must be positive, got {width}×{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "{width}×{height}×{channels} image needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(ImageBuffer { width, height, channels, data })
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels]).expect("valid dimensions")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let data = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, 1, data).expect("valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
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

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Copies pixel `(x, y)` (all channels) from `src`.
    #[inline]
    pub fn copy_pixel(&mut self, src: &ImageBuffer, x: usize, y: usize) {
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(&src.data[i..i + self.channels]);
    }

    /// Copies `src(sx, sy)` to `self(x, y)`; images may differ in size.
    pub fn copy_pixel_from(&mut self, src: &ImageBuffer, sx: usize, sy: usize, x: usize, y: usize) {
        let i = (y * self.width + x) * self.channels;
        let j = (sy * src.width + sx) * src.channels;
        self.data[i..i + self.channels].copy_from_slice(&src.data[j..j + self.channels]);
    }

    /// Luma conversion for RGB; identity for gray.
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data =
            self.data.chunks_exact(3).map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8).collect();
        ImageBuffer::gray(self.width, self.height, data).expect("same dimensions")
    }

    /// Bilinear resize with pixel-centre alignment.
    pub fn resize(&self, width: usize, height: usize) -> ImageBuffer {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = ImageBuffer::filled(width, height, self.channels, 0);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                for c in 0..self.channels {
                    let top = self.get(x0, y0, c) as f64 * (1.0 - wx) + self.get(x1, y0, c) as f64 * wx;
                    let bot = self.get(x0, y1, c) as f64 * (1.0 - wx) + self.get(x1, y1, c) as f64 * wx;
                    out.set(x, y, c, (top * (1.0 - wy) + bot * wy).round() as u8);
                }
            }
        }
        out
    }

    /// Channel-planar values mapped from `[0, 255]` to `[−1, 1]`.
    pub fn to_planar<T: Scalar>(&self) -> Vec<T> {
        let plane = self.width * self.height;
        let mut out = vec![T::zero(); plane * self.channels];
        for (i, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = T::lit(v as f64 / 127.5 - 1.0);
            }
        }
        out
    }

    /// `1 × C × H × W` tensor in `[−1, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(&[1, self.channels, self.height, self.width], self.to_planar()).expect("consistent shape")
    }

    /// Inverse of [`ImageBuffer::to_planar`]; values are clamped to `[−1, 1]`.
    pub fn from_planar<T: Scalar>(width: usize, height: usize, channels: usize, planar: &[T]) -> Result<Self> {
        let plane = width * height;
        if planar.len() != plane * channels {
            return Err(Error::invalid(format!("planar buffer of {} values does not match {width}×{height}×{channels}", planar.len())));
        }
        let mut data = vec![0u8; planar.len()];
        for c in 0..channels {
            for i in 0..plane {
                let v = planar[c * plane + i].as_f64().clamp(-1.0, 1.0);
                data[i * channels + c] = ((v + 1.0) * 127.5).round() as u8;
            }
        }
        ImageBuffer::new(width, height, channels, data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect { x, y, width, height }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.width <= width && self.y + self.height <= height
    }
}

/// Binary foreground map.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::invalid(format!("mask of {width}×{height} needs {} entries, got {}", width * height, bits.len())));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height]).expect("valid dimensions")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, bits).expect("valid dimensions")
    }

    /// Foreground where the first channel is strictly above `threshold`.
    pub fn from_image(img: &ImageBuffer, threshold: u8) -> Mask {
        let bits = img.data().chunks_exact(img.channels()).map(|p| p[0] > threshold).collect();
        Mask::new(img.width(), img.height(), bits).expect("same dimensions")
    }

    /// Gray image with foreground 255 and background 0.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::gray(self.width, self.height, self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()).expect("same dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_size(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn complement(&self) -> Mask {
        Mask { width: self.width, height: self.height, bits: self.bits.iter().map(|b| !b).collect() }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask { width: self.width, height: self.height, bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect() }
    }

    /// Tight bounding box of the foreground.
    pub fn bounding_box(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_round_trip() {
        let img = ImageBuffer::new(2, 1, 3, vec![0, 128, 255, 10, 20, 30]).unwrap();
        let p: Vec<f32> = img.to_planar();
        assert_eq!(p[0], -1.0);
        assert_eq!(p[4], 1.0);
        let back = ImageBuffer::from_planar(2, 1, 3, &p).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn mask_ops() {
        let m = Mask::from_fn(4, 4, |x, y| x == 1 && y < 2);
        assert_eq!(m.count(), 2);
        assert_eq!(m.complement().count(), 14);
        assert_eq!(m.bounding_box(), Some(Rect::new(1, 0, 1, 2)));
        assert_eq!(Mask::from_image(&m.to_image(), 127), m);
        assert_eq!(Mask::empty(3, 3).bounding_box(), None);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ImageBuffer::from_fn(5, 4, |x, y| (x * 10 + y) as u8);
        assert_eq!(img.resize(5, 4), img);
        let c = ImageBuffer::filled(7, 3, 1, 42).resize(16, 16);
        assert!(c.data().iter().all(|&v| v == 42));
    }
}
