use crate::augment::affine::{apply_affine_mask, apply_affine_to, AffineTransform, Interp};
use crate::augment::PairedSample;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Mask, Rect};
use crate::parallel;

/// Default global binarisation level for template supports.
pub const SUPPORT_THRESHOLD: u8 = 1;

/// Width of the exterior band tiled into removed objects.
pub const FILL_BAND: usize = 8;

/// A grayscale template and the mask of pixels it covers.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTarget {
    pub template: ImageBuffer,
    pub support: Mask,
    pub label: String,
}

impl SyntheticTarget {
    pub fn new(template: ImageBuffer, support: Mask, label: impl Into<String>) -> Result<Self> {
        if template.channels() != 1 {
            return Err(Error::invalid("target template must be grayscale"));
        }
        if support.width() != template.width() || support.height() != template.height() {
            return Err(Error::invalid("target support and template differ in size"));
        }
        if support.count() == 0 {
            return Err(Error::invalid("target support is empty"));
        }
        Ok(SyntheticTarget { template, support, label: label.into() })
    }

    /// Support = template pixels `≥ threshold`.
    pub fn binarized(template: ImageBuffer, threshold: u8, label: impl Into<String>) -> Result<Self> {
        let support = Mask::from_fn(template.width(), template.height(), |x, y| template.get(x, y, 0) >= threshold);
        Self::new(template, support, label)
    }
}

/// Composites the transformed template over `background`; the label is the
/// transformed support.
pub fn superimpose(target: &SyntheticTarget, t: &AffineTransform, background: &ImageBuffer, id: impl Into<String>) -> Result<PairedSample> {
    let (w, h) = (background.width(), background.height());
    let warped = apply_affine_to(&target.template, t, Interp::Nearest, w, h)?;
    let mask = apply_affine_mask(&target.support, t, w, h)?;
    if mask.count() == 0 {
        return Err(Error::invalid("transformed target does not intersect the background"));
    }
    let mut x = background.clone();
    for py in 0..h {
        for px in 0..w {
            if mask.get(px, py) {
                let v = warped.get(px, py, 0);
                for c in 0..x.channels() {
                    x.set(px, py, c, v);
                }
            }
        }
    }
    PairedSample::new(x, mask.to_image(), id)
}

/// One composite per `(transform, background)` pair, named `{label}_{k:04}`.
pub fn superimpose_sequence(
    target: &SyntheticTarget,
    transforms: &[AffineTransform],
    backgrounds: &[ImageBuffer],
) -> Result<Vec<PairedSample>> {
    if transforms.len() != backgrounds.len() {
        return Err(Error::invalid(format!("{} transforms for {} backgrounds", transforms.len(), backgrounds.len())));
    }
    let jobs: Vec<usize> = (0..transforms.len()).collect();
    parallel::map(&jobs, |&k| superimpose(target, &transforms[k], &backgrounds[k], format!("{}_{k:04}", target.label)))
        .into_iter()
        .collect()
}

enum Band {
    Above(usize, usize),
    Below(usize, usize),
    Left(usize, usize),
    Right(usize, usize),
}

/// Removes the object in `gt`, fills the hole from the nearest exterior band
/// and re-overlays only the part of the object inside `feature`.
pub fn feature_crop_enhance(img: &ImageBuffer, gt: &Mask, feature: &Rect) -> Result<(ImageBuffer, Mask)> {
    if img.width() != gt.width() || img.height() != gt.height() {
        return Err(Error::invalid("image and ground truth differ in size"));
    }
    let region = Mask::from_fn(gt.width(), gt.height(), |x, y| feature.contains(x, y));
    let kept = gt.and(&region);
    if kept.count() == 0 {
        return Err(Error::invalid(format!("feature region {feature:?} holds no foreground")));
    }
    let bb = gt.bounding_box().expect("non-empty ground truth");
    let (w, h) = (img.width(), img.height());
    let bands = [
        Band::Above(bb.y.saturating_sub(FILL_BAND), bb.y),
        Band::Below(bb.y + bb.height, (bb.y + bb.height + FILL_BAND).min(h)),
        Band::Left(bb.x.saturating_sub(FILL_BAND), bb.x),
        Band::Right(bb.x + bb.width, (bb.x + bb.width + FILL_BAND).min(w)),
    ];
    let extent = |b: &Band| match *b {
        Band::Above(a, z) | Band::Below(a, z) | Band::Left(a, z) | Band::Right(a, z) => z - a,
    };
    let band = bands.iter().max_by_key(|b| extent(b)).filter(|b| extent(b) > 0);
    let mut out = img.clone();
    match band {
        Some(band) => {
            for y in bb.y..bb.y + bb.height {
                for x in bb.x..bb.x + bb.width {
                    if !gt.get(x, y) {
                        continue;
                    }
                    let (sx, sy) = match *band {
                        Band::Above(a, z) => (x, z - 1 - (y - bb.y) % (z - a)),
                        Band::Below(a, z) => (x, a + (y - bb.y) % (z - a)),
                        Band::Left(a, z) => (z - 1 - (x - bb.x) % (z - a), y),
                        Band::Right(a, z) => (a + (x - bb.x) % (z - a), y),
                    };
                    out.copy_pixel_from(img, sx, sy, x, y);
                }
            }
        }
        None => {
            let outside = gt.complement();
            if outside.count() == 0 {
                return Err(Error::invalid("no background pixels to fill from"));
            }
            let mut mean = vec![0.0; img.channels()];
            for y in 0..h {
                for x in 0..w {
                    if outside.get(x, y) {
                        for (c, m) in mean.iter_mut().enumerate() {
                            *m += img.get(x, y, c) as f64;
                        }
                    }
                }
            }
            for y in 0..h {
                for x in 0..w {
                    if gt.get(x, y) {
                        for (c, m) in mean.iter().enumerate() {
                            out.set(x, y, c, (m / outside.count() as f64).round() as u8);
                        }
                    }
                }
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if kept.get(x, y) {
                out.copy_pixel(img, x, y);
            }
        }
    }
    Ok((out, kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_target() -> SyntheticTarget {
        SyntheticTarget::binarized(ImageBuffer::filled(8, 8, 1, 200), 1, "sq").unwrap()
    }

    #[test]
    fn opaque_square_composite() {
        let bg = ImageBuffer::from_fn(32, 32, |x, y| (x * 3 + y) as u8);
        let s = superimpose(&square_target(), &AffineTransform::translation(10.0, 5.0), &bg, "a").unwrap();
        let label = Mask::from_image(&s.y, 0);
        assert_eq!(label.count(), 64);
        for y in 0..32 {
            for x in 0..32 {
                let inside = (10..18).contains(&x) && (5..13).contains(&y);
                assert_eq!(label.get(x, y), inside);
                assert_eq!(s.x.get(x, y, 0), if inside { 200 } else { bg.get(x, y, 0) });
            }
        }
    }

    #[test]
    fn empty_support_and_miss_rejected() {
        let t = ImageBuffer::filled(4, 4, 1, 0);
        assert!(SyntheticTarget::binarized(t, 1, "none").is_err());
        let bg = ImageBuffer::filled(16, 16, 1, 0);
        assert!(superimpose(&square_target(), &AffineTransform::translation(40.0, 0.0), &bg, "m").is_err());
    }

    #[test]
    fn sequence_names() {
        let bgs = vec![ImageBuffer::filled(16, 16, 1, 3); 3];
        let ts: Vec<_> = (0..3).map(|k| AffineTransform::translation(k as f64, 1.0)).collect();
        let seq = superimpose_sequence(&square_target(), &ts, &bgs).unwrap();
        assert_eq!(seq.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["sq_0000", "sq_0001", "sq_0002"]);
    }

    #[test]
    fn feature_crop_counts_and_fill() {
        let img = ImageBuffer::from_fn(
            40,
            40,
            |x, y| {
                if (16..24).contains(&x) && (16..24).contains(&y) {
                    220
                } else {
                    40 + ((x + y) % 5) as u8
                }
            },
        );
        let gt = Mask::from_fn(40, 40, |x, y| (16..24).contains(&x) && (16..24).contains(&y));
        let (out, g) = feature_crop_enhance(&img, &gt, &Rect::new(16, 16, 2, 2)).unwrap();
        assert_eq!(g.count(), 4);
        assert_eq!(out.get(16, 16, 0), 220);
        let filled: Vec<f64> =
            (0..40 * 40).filter(|i| gt.get(i % 40, i / 40) && !g.get(i % 40, i / 40)).map(|i| out.get(i % 40, i / 40, 0) as f64).collect();
        let mean = filled.iter().sum::<f64>() / filled.len() as f64;
        assert!((mean - 42.0).abs() < 10.0, "{mean}");
        let (same, g2) = feature_crop_enhance(&img, &gt, &Rect::new(0, 0, 40, 40)).unwrap();
        assert_eq!((same, g2), (img.clone(), gt.clone()));
        assert!(feature_crop_enhance(&img, &gt, &Rect::new(0, 0, 4, 4)).is_err());
    }
}
