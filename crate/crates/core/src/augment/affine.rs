use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Mask};

const MIN_DET: f64 = 1e-9;

/// `[a b tx; c d ty]` mapping source `(x, y, 1)` to destination coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    m: [f64; 6],
}

/// Resampling rule for [`apply_affine`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Interp {
    Nearest,
    #[default]
    Bilinear,
}

impl fmt::Display for Interp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interp::Nearest => "nearest",
            Interp::Bilinear => "bilinear",
        })
    }
}

impl FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Interp::Nearest),
            "bilinear" => Ok(Interp::Bilinear),
            _ => Err(Error::Config(format!("unknown interpolation {s:?}"))),
        }
    }
}

impl AffineTransform {
    pub fn new(m: [f64; 6]) -> Result<Self> {
        let t = AffineTransform { m };
        if !m.iter().all(|v| v.is_finite()) || t.det().abs() <= MIN_DET {
            return Err(Error::invalid(format!("affine transform {m:?} is not invertible")));
        }
        Ok(t)
    }

    pub fn identity() -> Self {
        AffineTransform { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform { m: [1.0, 0.0, tx, 0.0, 1.0, ty] }
    }

    /// Rotation by `angle_deg` and uniform `scale` about `(cx, cy)`, then a
    /// shift by `(tx, ty)`.
    pub fn about_center(cx: f64, cy: f64, angle_deg: f64, scale: f64, tx: f64, ty: f64) -> Result<Self> {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let (a, b, cc, d) = (scale * c, -scale * s, scale * s, scale * c);
        Self::new([a, b, cx - a * cx - b * cy + tx, cc, d, cy - cc * cx - d * cy + ty])
    }

    pub fn matrix(&self) -> [f64; 6] {
        self.m
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }

    pub fn inverse(&self) -> Self {
        let [a, b, tx, c, d, ty] = self.m;
        let det = self.det();
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        AffineTransform { m: [ia, ib, -(ia * tx + ib * ty), ic, id, -(ic * tx + id * ty)] }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &AffineTransform) -> Self {
        let [a, b, tx, c, d, ty] = self.m;
        let [e, f, u, g, h, v] = first.m;
        AffineTransform { m: [a * e + b * g, a * f + b * h, a * u + b * v + tx, c * e + d * g, c * f + d * h, c * u + d * v + ty] }
    }

    /// Rotation angle of the linear part, assuming a similarity transform.
    pub fn angle_deg(&self) -> f64 {
        self.m[3].atan2(self.m[0]).to_degrees()
    }

    pub fn scale(&self) -> f64 {
        self.det().abs().sqrt()
    }
}

fn bilinear(img: &ImageBuffer, x: f64, y: f64, c: usize) -> f64 {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let (wx, wy) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(x0, y0, c) as f64 * (1.0 - wx) + img.get(x1, y0, c) as f64 * wx;
    let bot = img.get(x0, y1, c) as f64 * (1.0 - wx) + img.get(x1, y1, c) as f64 * wx;
    top * (1.0 - wy) + bot * wy
}

const EDGE: f64 = 1e-9;

/// Inverse-maps every destination pixel of a `width × height` canvas into
/// `img`; samples outside the source are 0.
pub fn apply_affine_to(img: &ImageBuffer, t: &AffineTransform, interp: Interp, width: usize, height: usize) -> Result<ImageBuffer> {
    AffineTransform::new(t.m)?;
    let inv = t.inverse();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut out = ImageBuffer::filled(width, height, img.channels(), 0);
    for y in 0..height {
        for x in 0..width {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            match interp {
                Interp::Nearest => {
                    let (rx, ry) = (sx.round(), sy.round());
                    if rx >= 0.0 && ry >= 0.0 && rx < w && ry < h {
                        out.copy_pixel_from(img, rx as usize, ry as usize, x, y);
                    }
                }
                Interp::Bilinear => {
                    if sx >= -EDGE && sy >= -EDGE && sx <= w - 1.0 + EDGE && sy <= h - 1.0 + EDGE {
                        let (sx, sy) = (sx.clamp(0.0, w - 1.0), sy.clamp(0.0, h - 1.0));
                        for c in 0..img.channels() {
                            out.set(x, y, c, bilinear(img, sx, sy, c).round().clamp(0.0, 255.0) as u8);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Same-size warp of `img` by `t`.
pub fn apply_affine(img: &ImageBuffer, t: &AffineTransform, interp: Interp) -> Result<ImageBuffer> {
    apply_affine_to(img, t, interp, img.width(), img.height())
}

/// Nearest-neighbour warp of a mask onto a `width × height` canvas.
pub fn apply_affine_mask(mask: &Mask, t: &AffineTransform, width: usize, height: usize) -> Result<Mask> {
    let img = apply_affine_to(&mask.to_image(), t, Interp::Nearest, width, height)?;
    Ok(Mask::from_image(&img, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> ImageBuffer {
        ImageBuffer::from_fn(16, 12, |x, y| ((x * 37 + y * 11) % 251) as u8)
    }

    #[test]
    fn singular_rejected() {
        assert!(AffineTransform::new([1.0, 2.0, 0.0, 2.0, 4.0, 0.0]).is_err());
        assert!(AffineTransform::new([1e-6, 0.0, 0.0, 0.0, 1e-6, 0.0]).is_err());
    }

    #[test]
    fn identity_is_bit_exact() {
        let img = pattern();
        for interp in [Interp::Nearest, Interp::Bilinear] {
            assert_eq!(apply_affine(&img, &AffineTransform::identity(), interp).unwrap(), img);
        }
    }

    #[test]
    fn integer_shift() {
        let img = pattern();
        let out = apply_affine(&img, &AffineTransform::translation(3.0, -2.0), Interp::Bilinear).unwrap();
        assert_eq!(out.get(5, 4, 0), img.get(2, 6, 0));
        assert_eq!(out.get(0, 0, 0), 0);
    }

    #[test]
    fn inverse_and_compose() {
        let t = AffineTransform::about_center(7.5, 5.5, 17.0, 1.1, 2.0, -1.0).unwrap();
        let id = t.compose(&t.inverse()).matrix();
        for (a, b) in id.iter().zip(AffineTransform::identity().matrix()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((t.angle_deg() - 17.0).abs() < 1e-9);
        assert!((t.scale() - 1.1).abs() < 1e-12);
        let (x, y) = t.apply(7.5, 5.5);
        assert!((x - 9.5).abs() < 1e-12 && (y - 4.5).abs() < 1e-12);
    }

    #[test]
    fn mask_stays_binary() {
        let m = Mask::from_fn(10, 10, |x, y| (x + y) % 3 == 0);
        let t = AffineTransform::about_center(4.5, 4.5, 23.0, 0.9, 0.3, 0.0).unwrap();
        let img = apply_affine_to(&m.to_image(), &t, Interp::Nearest, 10, 10).unwrap();
        assert!(img.data().iter().all(|&v| v == 0 || v == 255));
        assert_eq!(apply_affine_mask(&m, &AffineTransform::identity(), 10, 10).unwrap(), m);
    }
}
