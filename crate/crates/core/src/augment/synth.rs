use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::augment::affine::AffineTransform;
use crate::augment::composite::{superimpose, SyntheticTarget, SUPPORT_THRESHOLD};
use crate::augment::PairedSample;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::{parallel, pnm};

pub const MANIFEST_HEADER: &str = "input_path,target_path,id";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Background {
    /// Gaussian noise around a constant level.
    Noise { mean: f64, sigma: f64 },
    /// Left-to-right linear ramp plus Gaussian noise.
    Gradient { from: f64, to: f64, sigma: f64 },
    /// A straight ridge with a Gaussian cross-profile of standard deviation
    /// `width`, at random orientation, passing `2·width` to `4·width` pixels
    /// from the target centre.
    Ridge { base: f64, peak: f64, width: f64, sigma: f64 },
}

impl fmt::Display for Background {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Background::Noise { mean, sigma } => write!(f, "noise:{mean}:{sigma}"),
            Background::Gradient { from, to, sigma } => write!(f, "gradient:{from}:{to}:{sigma}"),
            Background::Ridge { base, peak, width, sigma } => write!(f, "ridge:{base}:{peak}:{width}:{sigma}"),
        }
    }
}

/// `noise:MEAN:SIGMA`, `gradient:FROM:TO:SIGMA` or `ridge:BASE:PEAK:WIDTH:SIGMA`.
impl FromStr for Background {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid background {s:?}"));
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let v: Vec<f64> = parts.map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        match (kind, v.as_slice()) {
            ("noise", &[mean, sigma]) => Ok(Background::Noise { mean, sigma }),
            ("gradient", &[from, to, sigma]) => Ok(Background::Gradient { from, to, sigma }),
            ("ridge", &[base, peak, width, sigma]) => Ok(Background::Ridge { base, peak, width, sigma }),
            _ => Err(bad()),
        }
    }
}

/// How target pixels combine with the background.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TargetMode {
    /// Template intensities replace the background.
    #[default]
    Opaque,
    /// Template intensities are added to the background, saturating at 255.
    Additive,
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMode::Opaque => "opaque",
            TargetMode::Additive => "additive",
        })
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opaque" => Ok(TargetMode::Opaque),
            "additive" => Ok(TargetMode::Additive),
            _ => Err(Error::Config(format!("unknown target mode {s:?}"))),
        }
    }
}

/// Parameters of a target-on-background suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub background: Background,
    /// Mean template intensity, or contrast in additive mode.
    pub target_level: f64,
    pub target_mode: TargetMode,
    pub target_noise: f64,
    /// Blade intensity relative to the hub.
    pub blade_fraction: f64,
    /// Per-image background offset drawn uniformly from `±jitter`.
    pub background_jitter: f64,
    /// Per-image template gain drawn uniformly from `1 ± jitter`.
    pub contrast_jitter: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    pub seed: u64,
    pub prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 32,
            background: Background::Noise { mean: 70.0, sigma: 18.0 },
            target_level: 190.0,
            target_mode: TargetMode::Opaque,
            target_noise: 12.0,
            blade_fraction: 1.0,
            background_jitter: 0.0,
            contrast_jitter: 0.0,
            min_scale: 0.8,
            max_scale: 1.2,
            seed: 0,
            prefix: "synth_".into(),
        }
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    rng
}

/// Hub-and-blade template on a `side × side` canvas; zero outside the shape.
/// Blades take `blade_fraction · level`.
pub fn rotor_template(side: usize, level: f64, blade_fraction: f64, noise: f64, seed: u64) -> Result<SyntheticTarget> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (side - 1) as f64 / 2.0;
    let s = side as f64;
    let img = ImageBuffer::from_fn(side, side, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        let hub = dx * dx + dy * dy <= (0.24 * s).powi(2);
        let blade = dx.abs() <= 0.46 * s && dy.abs() <= 0.09 * s;
        match (hub, blade) {
            (true, _) => 1,
            (false, true) => 2,
            _ => 0,
        }
    });
    let data = img
        .data()
        .iter()
        .map(|&part| match part {
            0 => 0,
            1 => clamp_u8(level + noise * gauss(&mut rng)).max(SUPPORT_THRESHOLD),
            _ => clamp_u8(blade_fraction * level + noise * gauss(&mut rng)).max(SUPPORT_THRESHOLD),
        })
        .collect();
    SyntheticTarget::binarized(ImageBuffer::gray(side, side, data)?, SUPPORT_THRESHOLD, "rotor")
}

/// Background for a target centred at `center`; `offset` shifts all levels.
pub fn background(size: usize, kind: Background, offset: f64, center: (f64, f64), rng: &mut ChaCha8Rng) -> ImageBuffer {
    let ridge = match kind {
        Background::Ridge { width, .. } => {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let d = rng.random_range(2.0 * width..=4.0 * width) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let (nx, ny) = (theta.cos(), theta.sin());
            Some((nx, ny, nx * center.0 + ny * center.1 + d))
        }
        _ => None,
    };
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (base, sigma) = match kind {
                Background::Noise { mean, sigma } => (mean, sigma),
                Background::Gradient { from, to, sigma } => (from + (to - from) * x as f64 / (size - 1).max(1) as f64, sigma),
                Background::Ridge { base, peak, width, sigma } => {
                    let (nx, ny, c) = ridge.expect("ridge geometry");
                    let dist = nx * x as f64 + ny * y as f64 - c;
                    (base + (peak - base) * (-dist * dist / (2.0 * width * width)).exp(), sigma)
                }
            };
            data.push(clamp_u8(base + offset + sigma * gauss(rng)));
        }
    }
    ImageBuffer::gray(size, size, data).expect("square buffer")
}

/// `count` composites of a rotor target under random rotation, scale and
/// placement; labels are 0/255 masks.
pub fn synthesize_dataset(cfg: &SynthConfig, count: usize) -> Result<Vec<PairedSample>> {
    if cfg.size < 8 {
        return Err(Error::invalid(format!("synthetic images must be at least 8 pixels, got {}", cfg.size)));
    }
    if !(cfg.min_scale > 0.0 && cfg.min_scale <= cfg.max_scale) {
        return Err(Error::invalid("synthetic scale range is empty"));
    }
    let side = cfg.size / 2;
    let target = rotor_template(side, cfg.target_level, cfg.blade_fraction, cfg.target_noise, cfg.seed)?;
    let tc = (side - 1) as f64 / 2.0;
    parallel::map_range(count, |k| {
        let mut rng = sample_rng(cfg.seed, k);
        let angle = rng.random_range(-180.0..180.0);
        let scale = rng.random_range(cfg.min_scale..=cfg.max_scale);
        let s = cfg.size as f64;
        let (cx, cy) = (rng.random_range(0.3 * s..0.7 * s), rng.random_range(0.3 * s..0.7 * s));
        let t = AffineTransform::about_center(tc, tc, angle, scale, cx - tc, cy - tc)?;
        let offset = if cfg.background_jitter > 0.0 { rng.random_range(-cfg.background_jitter..=cfg.background_jitter) } else { 0.0 };
        let gain = if cfg.contrast_jitter > 0.0 { rng.random_range(1.0 - cfg.contrast_jitter..=1.0 + cfg.contrast_jitter) } else { 1.0 };
        let bg = background(cfg.size, cfg.background, offset, (cx, cy), &mut rng);
        let mut s = superimpose(&target, &t, &bg, format!("{}{k:04}", cfg.prefix))?;
        if cfg.target_mode == TargetMode::Additive || gain != 1.0 {
            let add = cfg.target_mode == TargetMode::Additive;
            for (i, v) in s.x.data_mut().iter_mut().enumerate() {
                if s.y.data()[i] != 0 {
                    let under = if add { bg.data()[i] as f64 } else { 0.0 };
                    *v = clamp_u8(under + gain * *v as f64).max(SUPPORT_THRESHOLD);
                }
            }
        }
        Ok(s)
    })
    .into_iter()
    .collect()
}

fn ext(img: &ImageBuffer) -> &'static str {
    if img.channels() == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

/// Writes `inputs/`, `targets/` and `manifest.csv` under `dir`.
pub fn write_dataset(samples: &[PairedSample], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["inputs", "targets"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    for s in samples {
        if s.id.is_empty() || s.id.contains([',', '/', '\\', '\n']) {
            return Err(Error::invalid(format!("sample id {:?} cannot be used as a file name", s.id)));
        }
        let xi = format!("inputs/{}.{}", s.id, ext(&s.x));
        let yi = format!("targets/{}.{}", s.id, ext(&s.y));
        pnm::write(dir.join(&xi), &s.x)?;
        pnm::write(dir.join(&yi), &s.y)?;
        manifest.push_str(&format!("{xi},{yi},{}\n", s.id));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a manifest; relative paths resolve against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PairedSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
        _ => return Err(Error::Data(format!("{}: expected header {MANIFEST_HEADER:?}", path.display()))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(Error::Data(format!("{} line {}: expected 3 fields, got {}", path.display(), i + 1, f.len())));
        }
        let x = pnm::read(base.join(f[0]))?;
        let y = pnm::read(base.join(f[1]))?;
        out.push(PairedSample::new(x, y, f[2]).map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Mask;

    #[test]
    fn dataset_is_seeded_and_binary() {
        let cfg = SynthConfig::default();
        let a = synthesize_dataset(&cfg, 6).unwrap();
        assert_eq!(a, synthesize_dataset(&cfg, 6).unwrap());
        assert_ne!(a[0].x, a[1].x);
        for s in &a {
            assert!(s.y.data().iter().all(|&v| v == 0 || v == 255));
            let fg = Mask::from_image(&s.y, 0).count();
            assert!(fg > 20 && fg < 600, "{fg}");
        }
    }

    #[test]
    fn additive_targets_keep_background_texture() {
        let base = SynthConfig { background: Background::Gradient { from: 10.0, to: 100.0, sigma: 3.0 }, ..SynthConfig::default() };
        let op = synthesize_dataset(&base, 2).unwrap();
        let add = synthesize_dataset(&SynthConfig { target_mode: TargetMode::Additive, ..base }, 2).unwrap();
        for (o, a) in op.iter().zip(&add) {
            assert_eq!(o.y, a.y);
            for i in 0..o.x.data().len() {
                if o.y.data()[i] == 0 {
                    assert_eq!(o.x.data()[i], a.x.data()[i]);
                } else {
                    assert!(a.x.data()[i] >= o.x.data()[i]);
                }
            }
        }
    }

    #[test]
    fn gradient_background_ramps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bg = background(16, Background::Gradient { from: 0.0, to: 255.0, sigma: 0.0 }, 0.0, (8.0, 8.0), &mut rng);
        assert_eq!(bg.get(0, 3, 0), 0);
        assert_eq!(bg.get(15, 3, 0), 255);
    }

    #[test]
    fn background_strings_round_trip() {
        for b in [
            Background::Noise { mean: 70.0, sigma: 18.0 },
            Background::Gradient { from: 20.0, to: 140.5, sigma: 8.0 },
            Background::Ridge { base: 60.0, peak: 160.0, width: 2.0, sigma: 8.0 },
        ] {
            assert_eq!(b.to_string().parse::<Background>().unwrap(), b);
        }
        assert!("noise:1".parse::<Background>().is_err());
        assert!("plasma:1:2".parse::<Background>().is_err());
        assert_eq!("additive".parse::<TargetMode>().unwrap(), TargetMode::Additive);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = synthesize_dataset(&SynthConfig { size: 16, ..SynthConfig::default() }, 3).unwrap();
        let m = write_dataset(&a, dir.path()).unwrap();
        assert_eq!(read_manifest(&m).unwrap(), a);
        std::fs::write(&m, "a,b\n").unwrap();
        assert!(matches!(read_manifest(&m), Err(Error::Data(_))));
    }
}
