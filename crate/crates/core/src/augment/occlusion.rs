use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Mask};

pub const MIN_OCCLUSION: f64 = 0.05;
pub const MAX_OCCLUSION: f64 = 0.60;

#[derive(Clone, Debug, PartialEq)]
pub enum OccluderShape {
    /// Seeded placement and aspect ratio with the given area fraction.
    Ellipse { area_fraction: f64 },
    /// Vertices in pixel coordinates, filled with the even-odd rule.
    Polygon { vertices: Vec<(f64, f64)> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OccluderFill {
    Uniform(u8),
    /// Independent uniform noise in `lo..=hi`.
    Noise {
        lo: u8,
        hi: u8,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccluderSpec {
    pub shape: OccluderShape,
    pub fill: OccluderFill,
}

/// How a reconstruction is laid over its input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OverlayMode {
    #[default]
    Opaque,
    /// 50/50 blend of input and reconstruction.
    Transparent,
}

impl fmt::Display for OverlayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlayMode::Opaque => "opaque",
            OverlayMode::Transparent => "transparent",
        })
    }
}

impl FromStr for OverlayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opaque" => Ok(OverlayMode::Opaque),
            "transparent" => Ok(OverlayMode::Transparent),
            _ => Err(Error::Config(format!("unknown overlay mode {s:?}"))),
        }
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if !(MIN_OCCLUSION..=MAX_OCCLUSION).contains(&f) {
        return Err(Error::invalid(format!(
            "occluder covers {:.1}% of the image; allowed range is {}–{}%",
            100.0 * f,
            100.0 * MIN_OCCLUSION,
            100.0 * MAX_OCCLUSION
        )));
    }
    Ok(())
}

fn ellipse_mask(w: usize, h: usize, area_fraction: f64, rng: &mut ChaCha8Rng) -> Mask {
    let area = area_fraction * (w * h) as f64;
    let aspect: f64 = rng.random_range(0.6..1.6);
    let mut a = (area * aspect / std::f64::consts::PI).sqrt().min(w as f64 / 2.0);
    let mut b = area / (std::f64::consts::PI * a);
    if b > h as f64 / 2.0 {
        b = h as f64 / 2.0;
        a = (area / (std::f64::consts::PI * b)).min(w as f64 / 2.0);
    }
    let cx = rng.random_range(a..=(w as f64 - a).max(a)) - 0.5;
    let cy = rng.random_range(b..=(h as f64 - b).max(b)) - 0.5;
    Mask::from_fn(w, h, |x, y| {
        let (u, v) = ((x as f64 - cx) / a, (y as f64 - cy) / b);
        u * u + v * v <= 1.0
    })
}

fn polygon_mask(w: usize, h: usize, vertices: &[(f64, f64)]) -> Mask {
    Mask::from_fn(w, h, |x, y| {
        let (px, py) = (x as f64, y as f64);
        let mut inside = false;
        let mut j = vertices.len() - 1;
        for i in 0..vertices.len() {
            let ((xi, yi), (xj, yj)) = (vertices[i], vertices[j]);
            if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    })
}

/// Paints a seeded occluder over `img`; returns the occluded image and the
/// mask of painted pixels.
pub fn synthesize_occlusion(img: &ImageBuffer, spec: &OccluderSpec, seed: u64) -> Result<(ImageBuffer, Mask)> {
    let (w, h) = (img.width(), img.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = match &spec.shape {
        OccluderShape::Ellipse { area_fraction } => {
            check_fraction(*area_fraction)?;
            ellipse_mask(w, h, *area_fraction, &mut rng)
        }
        OccluderShape::Polygon { vertices } => {
            if vertices.len() < 3 {
                return Err(Error::invalid("polygon occluder needs at least 3 vertices"));
            }
            let m = polygon_mask(w, h, vertices);
            check_fraction(m.count() as f64 / (w * h) as f64)?;
            m
        }
    };
    if let OccluderFill::Noise { lo, hi } = spec.fill {
        if lo > hi {
            return Err(Error::invalid(format!("noise fill range {lo}..={hi} is empty")));
        }
    }
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                for c in 0..img.channels() {
                    let v = match spec.fill {
                        OccluderFill::Uniform(v) => v,
                        OccluderFill::Noise { lo, hi } => rng.random_range(lo..=hi),
                    };
                    out.set(x, y, c, v);
                }
            }
        }
    }
    Ok((out, mask))
}

/// `input` outside `mask`; `generated` (opaque) or the rounded mean of both
/// (transparent) inside.
pub fn overlay_reconstruction(input: &ImageBuffer, generated: &ImageBuffer, mask: &Mask, mode: OverlayMode) -> Result<ImageBuffer> {
    if !input.same_size(generated) || input.channels() != generated.channels() {
        return Err(Error::invalid("input and reconstruction differ in size or channels"));
    }
    if mask.width() != input.width() || mask.height() != input.height() {
        return Err(Error::invalid("occlusion mask does not match the input size"));
    }
    let mut out = input.clone();
    for y in 0..input.height() {
        for x in 0..input.width() {
            if !mask.get(x, y) {
                continue;
            }
            for c in 0..input.channels() {
                let g = generated.get(x, y, c);
                let v = match mode {
                    OverlayMode::Opaque => g,
                    OverlayMode::Transparent => (input.get(x, y, c) as u16 + g as u16).div_ceil(2) as u8,
                };
                out.set(x, y, c, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> ImageBuffer {
        ImageBuffer::from_fn(64, 64, |x, y| ((x * 5 + y * 3) % 256) as u8)
    }

    fn ellipse(f: f64) -> OccluderSpec {
        OccluderSpec { shape: OccluderShape::Ellipse { area_fraction: f }, fill: OccluderFill::Noise { lo: 0, hi: 255 } }
    }

    #[test]
    fn area_bounds() {
        assert!(synthesize_occlusion(&img(), &ellipse(0.0), 1).is_err());
        assert!(synthesize_occlusion(&img(), &ellipse(0.7), 1).is_err());
        let tiny = OccluderSpec {
            shape: OccluderShape::Polygon { vertices: vec![(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)] },
            fill: OccluderFill::Uniform(0),
        };
        assert!(synthesize_occlusion(&img(), &tiny, 1).is_err());
    }

    #[test]
    fn quarter_ellipse_area() {
        for seed in 0..10 {
            let (_, m) = synthesize_occlusion(&img(), &ellipse(0.25), seed).unwrap();
            let f = m.count() as f64 / 4096.0;
            assert!((0.24..=0.26).contains(&f), "seed {seed}: {f}");
        }
    }

    #[test]
    fn seeded_and_round_trip() {
        let a = synthesize_occlusion(&img(), &ellipse(0.3), 9).unwrap();
        assert_eq!(a, synthesize_occlusion(&img(), &ellipse(0.3), 9).unwrap());
        let back = overlay_reconstruction(&a.0, &img(), &a.1, OverlayMode::Opaque).unwrap();
        assert_eq!(back, img());
    }

    #[test]
    fn overlay_modes() {
        let a = ImageBuffer::filled(4, 4, 1, 10);
        let b = ImageBuffer::filled(4, 4, 1, 21);
        assert_eq!(overlay_reconstruction(&a, &b, &Mask::empty(4, 4), OverlayMode::Opaque).unwrap(), a);
        let full = Mask::from_fn(4, 4, |_, _| true);
        assert_eq!(overlay_reconstruction(&a, &b, &full, OverlayMode::Opaque).unwrap(), b);
        assert_eq!(overlay_reconstruction(&a, &b, &full, OverlayMode::Transparent).unwrap().get(0, 0, 0), 16);
    }

    #[test]
    fn polygon_square() {
        let spec = OccluderSpec {
            shape: OccluderShape::Polygon { vertices: vec![(-0.5, -0.5), (31.5, -0.5), (31.5, 31.5), (-0.5, 31.5)] },
            fill: OccluderFill::Uniform(7),
        };
        let (out, m) = synthesize_occlusion(&img(), &spec, 0).unwrap();
        assert_eq!(m.count(), 1024);
        assert_eq!(out.get(0, 0, 0), 7);
        assert_eq!(out.get(40, 40, 0), img().get(40, 40, 0));
    }
}
