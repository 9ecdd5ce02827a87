use crate::augment::affine::AffineTransform;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::parallel;

/// Correlation peaks below this are reported as unreliable.
pub const MIN_PEAK: f64 = 0.2;
pub const MAX_ANGLE_DEG: f64 = 30.0;
pub const MIN_SCALE: f64 = 0.8;
pub const MAX_SCALE: f64 = 1.25;
/// Translation bound as a fraction of the frame size.
pub const MAX_SHIFT: f64 = 0.25;

const KEEP: usize = 6;
const MIN_OVERLAP: f64 = 0.3;
const MIN_SIDE: usize = 16;
const MAX_LEVELS: usize = 3;

/// Outcome of [`register`]: the transform taking frame A onto frame B and
/// its parameters about the frame centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Registration {
    pub transform: AffineTransform,
    pub angle_deg: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    pub peak: f64,
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn from_image(img: &ImageBuffer) -> Self {
        Plane { w: img.width(), h: img.height(), v: img.data().iter().map(|&p| p as f64).collect() }
    }

    fn half(&self) -> Self {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let at = |dx: usize, dy: usize| self.v[(2 * y + dy) * self.w + 2 * x + dx];
                v[y * w + x] = (at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)) / 4.0;
            }
        }
        Plane { w, h, v }
    }

    fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.w - 1) as f64 && y <= (self.h - 1) as f64) {
            return None;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.w - 1), (y0 + 1).min(self.h - 1));
        let (wx, wy) = (x - x0 as f64, y - y0 as f64);
        let at = |xx: usize, yy: usize| self.v[yy * self.w + xx];
        let top = at(x0, y0) * (1.0 - wx) + at(x1, y0) * wx;
        let bot = at(x0, y1) * (1.0 - wx) + at(x1, y1) * wx;
        Some(top * (1.0 - wy) + bot * wy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Params {
    angle: f64,
    log_scale: f64,
    tx: f64,
    ty: f64,
}

#[derive(Clone, Copy)]
struct Steps {
    angle: f64,
    log_scale: f64,
    shift: f64,
}

const FINEST: Steps = Steps { angle: 1.0, log_scale: 0.01, shift: 0.5 };

struct Search {
    levels: Vec<(Plane, Plane)>,
    width: usize,
    height: usize,
}

impl Search {
    fn full_transform(&self, p: &Params) -> AffineTransform {
        let (cx, cy) = ((self.width - 1) as f64 / 2.0, (self.height - 1) as f64 / 2.0);
        AffineTransform::about_center(cx, cy, p.angle, p.log_scale.exp(), p.tx, p.ty).expect("scale within bounds")
    }

    fn clamp(&self, p: Params) -> Params {
        let (mx, my) = (MAX_SHIFT * self.width as f64, MAX_SHIFT * self.height as f64);
        Params {
            angle: p.angle.clamp(-MAX_ANGLE_DEG, MAX_ANGLE_DEG),
            log_scale: p.log_scale.clamp(MIN_SCALE.ln(), MAX_SCALE.ln()),
            tx: p.tx.clamp(-mx, mx),
            ty: p.ty.clamp(-my, my),
        }
    }

    /// Normalised cross-correlation of B against A warped by `p` at `level`.
    fn score(&self, level: usize, p: &Params) -> f64 {
        let (a, b) = &self.levels[level];
        let f = (1usize << level) as f64;
        let off = (f - 1.0) / 2.0;
        let inv = self.full_transform(p).inverse();
        let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
        for y in 0..b.h {
            for x in 0..b.w {
                let (fx, fy) = inv.apply(f * x as f64 + off, f * y as f64 + off);
                if let Some(va) = a.sample((fx - off) / f, (fy - off) / f) {
                    let vb = b.v[y * b.w + x];
                    n += 1;
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
        }
        if (n as f64) < MIN_OVERLAP * (b.w * b.h) as f64 {
            return -1.0;
        }
        let nf = n as f64;
        let cov = sab - sa * sb / nf;
        let va = saa - sa * sa / nf;
        let vb = sbb - sb * sb / nf;
        if va <= 1e-9 || vb <= 1e-9 {
            return -1.0;
        }
        cov / (va * vb).sqrt()
    }

    fn best_of(&self, level: usize, cands: Vec<Params>) -> Vec<(Params, f64)> {
        let scores = parallel::map(&cands, |p| self.score(level, p));
        let mut out: Vec<(Params, f64)> = cands.into_iter().zip(scores).collect();
        // stable sort keeps candidate order on ties
        out.sort_by(|x, y| y.1.total_cmp(&x.1));
        out
    }

    fn exhaustive(&self, level: usize, s: Steps) -> Vec<(Params, f64)> {
        let grid = |step: f64, lo: f64, hi: f64| -> Vec<f64> {
            let k = (hi / step).floor() as i64;
            let k_lo = (lo / step).ceil() as i64;
            (k_lo..=k).map(|i| i as f64 * step).collect()
        };
        let (mx, my) = (MAX_SHIFT * self.width as f64, MAX_SHIFT * self.height as f64);
        let angles = grid(s.angle, -MAX_ANGLE_DEG, MAX_ANGLE_DEG);
        let scales = grid(s.log_scale, MIN_SCALE.ln(), MAX_SCALE.ln());
        let xs = grid(s.shift, -mx, mx);
        let ys = grid(s.shift, -my, my);
        let mut cands = Vec::with_capacity(angles.len() * scales.len() * xs.len() * ys.len());
        for &angle in &angles {
            for &log_scale in &scales {
                for &ty in &ys {
                    for &tx in &xs {
                        cands.push(Params { angle, log_scale, tx, ty });
                    }
                }
            }
        }
        self.best_of(level, cands)
    }

    /// Hill-climbs on the 3⁴ neighbourhood until no neighbour improves.
    fn climb(&self, level: usize, start: (Params, f64), s: Steps, max_rounds: usize) -> (Params, f64) {
        let mut best = (start.0, self.score(level, &start.0));
        for _ in 0..max_rounds {
            let p = best.0;
            let mut cands = Vec::with_capacity(81);
            for da in [-1.0, 0.0, 1.0] {
                for ds in [-1.0, 0.0, 1.0] {
                    for dy in [-1.0, 0.0, 1.0] {
                        for dx in [-1.0, 0.0, 1.0] {
                            cands.push(self.clamp(Params {
                                angle: p.angle + da * s.angle,
                                log_scale: p.log_scale + ds * s.log_scale,
                                tx: p.tx + dx * s.shift,
                                ty: p.ty + dy * s.shift,
                            }));
                        }
                    }
                }
            }
            let top = self.best_of(level, cands)[0];
            if top.1 > best.1 {
                best = top;
            } else {
                break;
            }
        }
        best
    }
}

/// Coarse-to-fine search over rotation, uniform scale and translation
/// maximising normalised cross-correlation between `frame_a` warped by the
/// result and `frame_b`.
pub fn register(frame_a: &ImageBuffer, frame_b: &ImageBuffer) -> Result<Registration> {
    if frame_a.channels() != 1 || frame_b.channels() != 1 {
        return Err(Error::invalid("registration needs grayscale frames"));
    }
    if !frame_a.same_size(frame_b) {
        return Err(Error::invalid(format!(
            "frames differ in size: {}×{} vs {}×{}",
            frame_a.width(),
            frame_a.height(),
            frame_b.width(),
            frame_b.height()
        )));
    }
    for f in [frame_a, frame_b] {
        if f.data().iter().all(|&v| v == f.data()[0]) {
            return Err(Error::invalid("registration frame is constant"));
        }
    }
    let mut levels = vec![(Plane::from_image(frame_a), Plane::from_image(frame_b))];
    while levels.len() <= MAX_LEVELS {
        let (a, b) = levels.last().expect("non-empty");
        if a.w.min(a.h) / 2 < MIN_SIDE {
            break;
        }
        let next = (a.half(), b.half());
        levels.push(next);
    }
    let search = Search { width: frame_a.width(), height: frame_a.height(), levels };
    let top = search.levels.len() - 1;
    let f = (1usize << top) as f64;
    let mut steps = Steps { angle: f.min(4.0), log_scale: 0.05, shift: f };
    let mut cands: Vec<(Params, f64)> = search.exhaustive(top, steps).into_iter().take(KEEP).collect();
    for level in (0..top).rev() {
        steps = Steps {
            angle: (steps.angle / 2.0).max(FINEST.angle),
            log_scale: (steps.log_scale / 2.0).max(FINEST.log_scale),
            shift: (steps.shift / 2.0).max(FINEST.shift),
        };
        cands = cands.into_iter().map(|c| search.climb(level, c, steps, 4)).collect();
    }
    loop {
        cands = cands.into_iter().map(|c| search.climb(0, c, steps, 32)).collect();
        if steps.angle <= FINEST.angle && steps.log_scale <= FINEST.log_scale && steps.shift <= FINEST.shift {
            break;
        }
        steps = Steps {
            angle: (steps.angle / 2.0).max(FINEST.angle),
            log_scale: (steps.log_scale / 2.0).max(FINEST.log_scale),
            shift: (steps.shift / 2.0).max(FINEST.shift),
        };
    }
    let (p, peak) = cands
        .into_iter()
        .fold(None::<(Params, f64)>, |acc, c| match acc {
            Some(a) if a.1 >= c.1 => Some(a),
            _ => Some(c),
        })
        .expect("at least one candidate");
    if !(peak >= MIN_PEAK) {
        return Err(Error::Unreliable { peak });
    }
    Ok(Registration { transform: search.full_transform(&p), angle_deg: p.angle, scale: p.log_scale.exp(), tx: p.tx, ty: p.ty, peak })
}

/// Transform `T` such that `apply_affine(frame_a, T) ≈ frame_b`.
pub fn estimate_affine(frame_a: &ImageBuffer, frame_b: &ImageBuffer) -> Result<AffineTransform> {
    register(frame_a, frame_b).map(|r| r.transform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::affine::{apply_affine, Interp};

    pub(crate) fn blobs(size: usize) -> ImageBuffer {
        let c = [(0.3, 0.35, 0.12, 200.0), (0.65, 0.6, 0.18, 150.0), (0.5, 0.2, 0.08, 120.0)];
        ImageBuffer::from_fn(size, size, |x, y| {
            let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
            let s: f64 = c.iter().map(|&(cx, cy, r, a)| a * (-((u - cx).powi(2) + (v - cy).powi(2)) / (r * r)).exp()).sum();
            (20.0 + s).min(255.0) as u8
        })
    }

    #[test]
    fn identical_frames() {
        let a = blobs(48);
        let r = register(&a, &a).unwrap();
        assert!(r.peak > 0.999);
        assert_eq!((r.angle_deg, r.tx, r.ty), (0.0, 0.0, 0.0));
        assert!((r.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_shift() {
        let a = blobs(64);
        let b = apply_affine(&a, &AffineTransform::translation(3.0, -2.0), Interp::Bilinear).unwrap();
        let r = register(&a, &b).unwrap();
        assert!((r.tx - 3.0).abs() <= 0.5 && (r.ty + 2.0).abs() <= 0.5, "{r:?}");
    }

    #[test]
    fn recovers_rotation() {
        let a = blobs(64);
        let t = AffineTransform::about_center(31.5, 31.5, 10.0, 1.0, 0.0, 0.0).unwrap();
        let b = apply_affine(&a, &t, Interp::Bilinear).unwrap();
        let r = register(&a, &b).unwrap();
        assert!((r.angle_deg - 10.0).abs() <= 1.0, "{r:?}");
    }

    #[test]
    fn unrelated_frames_rejected() {
        let a = blobs(32);
        assert!(register(&a, &ImageBuffer::filled(32, 32, 1, 9)).is_err());
        assert!(register(&a, &blobs(16)).is_err());
        let checker = ImageBuffer::from_fn(32, 32, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        match register(&a, &checker) {
            Err(Error::Unreliable { peak }) => assert!(peak < MIN_PEAK),
            other => panic!("expected unreliable, got {other:?}"),
        }
    }
}
