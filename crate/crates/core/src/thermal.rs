//! Color-band pixel counting on thermal-style frames and rate-of-change
//! flashover alarms.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::{parallel, pnm};

pub const DEFAULT_TAU: u8 = 128;

/// How a pixel is assigned to a color band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BandRule {
    /// A pixel counts for every channel whose value is `≥ τ`.
    #[default]
    Threshold,
    /// A pixel counts only for its largest channel (first on ties), if `≥ τ`.
    Dominant,
}

impl fmt::Display for BandRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandRule::Threshold => "threshold",
            BandRule::Dominant => "dominant",
        })
    }
}

impl FromStr for BandRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(BandRule::Threshold),
            "dominant" => Ok(BandRule::Dominant),
            _ => Err(Error::Config(format!("unknown band rule {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BandCounts {
    pub t: f64,
    pub red: u64,
    /// `(red + green) / 2`.
    pub yellow: f64,
    pub green: u64,
    pub blue: u64,
}

impl BandCounts {
    pub fn new(t: f64, red: u64, green: u64, blue: u64) -> Self {
        BandCounts { t, red, yellow: (red + green) as f64 / 2.0, green, blue }
    }

    /// The high-temperature signal: red + yellow.
    pub fn hot(&self) -> f64 {
        self.red as f64 + self.yellow
    }
}

pub fn count_bands(frame: &ImageBuffer, tau: u8, rule: BandRule) -> Result<BandCounts> {
    if frame.channels() != 3 {
        return Err(Error::invalid("band counting needs an RGB frame"));
    }
    if tau == 0 {
        return Err(Error::invalid("band threshold must be in 1..=255"));
    }
    let mut n = [0u64; 3];
    for px in frame.data().chunks_exact(3) {
        match rule {
            BandRule::Threshold => {
                for (c, &v) in px.iter().enumerate() {
                    n[c] += (v >= tau) as u64;
                }
            }
            BandRule::Dominant => {
                let (c, &v) = px.iter().enumerate().fold((0, &px[0]), |b, (i, v)| if *v > *b.1 { (i, v) } else { b });
                if v >= tau {
                    n[c] += 1;
                }
            }
        }
    }
    Ok(BandCounts::new(0.0, n[0], n[1], n[2]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermalSeries {
    pub counts: Vec<BandCounts>,
    pub interval: f64,
}

pub const SERIES_HEADER: &str = "t,red,yellow,green,blue";

impl ThermalSeries {
    /// Series from raw counts at `k · interval`.
    pub fn from_counts(counts: &[(u64, u64, u64)], interval: f64) -> Result<Self> {
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::invalid(format!("frame interval must be positive, got {interval}")));
        }
        let counts = counts.iter().enumerate().map(|(k, &(r, g, b))| BandCounts::new(k as f64 * interval, r, g, b)).collect();
        Ok(ThermalSeries { counts, interval })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SERIES_HEADER}\n");
        for c in &self.counts {
            out.push_str(&format!("{},{},{},{},{}\n", c.t, c.red, c.yellow, c.green, c.blue));
        }
        out
    }
}

pub fn build_series(frames: &[ImageBuffer], interval: f64, tau: u8, rule: BandRule) -> Result<ThermalSeries> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!("a series needs at least 2 frames, got {}", frames.len())));
    }
    if let Some(f) = frames.iter().find(|f| !f.same_size(&frames[0])) {
        return Err(Error::invalid(format!(
            "frame sizes differ: {}×{} vs {}×{}",
            frames[0].width(),
            frames[0].height(),
            f.width(),
            f.height()
        )));
    }
    let raw = parallel::map(frames, |f| count_bands(f, tau, rule)).into_iter().collect::<Result<Vec<_>>>()?;
    ThermalSeries::from_counts(&raw.iter().map(|c| (c.red, c.green, c.blue)).collect::<Vec<_>>(), interval)
}

pub fn build_series_from_files<P: AsRef<Path>>(paths: &[P], interval: f64, tau: u8, rule: BandRule) -> Result<ThermalSeries> {
    let frames = paths.iter().map(pnm::read).collect::<Result<Vec<_>>>()?;
    build_series(&frames, interval, tau, rule)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlarmConfig {
    /// Frames per least-squares window.
    pub window: usize,
    /// Minimum slope of red + yellow, pixels per second.
    pub rate_threshold: f64,
    pub consecutive: usize,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        AlarmConfig { window: 3, rate_threshold: 25.0, consecutive: 1 }
    }
}

impl AlarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid(format!("alarm window must be at least 2, got {}", self.window)));
        }
        if self.consecutive == 0 {
            return Err(Error::invalid("alarm needs at least one consecutive trigger"));
        }
        if !self.rate_threshold.is_finite() {
            return Err(Error::invalid("alarm rate threshold must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alarm {
    pub frame: usize,
    pub t: f64,
    pub slope: f64,
}

/// Least-squares slope of `ys` against `ts`.
pub fn ls_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let (mt, my) = (ts.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let den: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    num / den
}

/// First frame at which the windowed slope of red + yellow has reached the
/// threshold on `consecutive` successive windows.
pub fn predict_flashover(series: &ThermalSeries, cfg: &AlarmConfig) -> Result<Option<Alarm>> {
    cfg.validate()?;
    let c = &series.counts;
    if c.len() < cfg.window {
        return Err(Error::invalid(format!("series of {} frames is shorter than the window {}", c.len(), cfg.window)));
    }
    let ts: Vec<f64> = c.iter().map(|b| b.t).collect();
    let ys: Vec<f64> = c.iter().map(BandCounts::hot).collect();
    let mut run = 0;
    for end in cfg.window - 1..c.len() {
        let lo = end + 1 - cfg.window;
        let slope = ls_slope(&ts[lo..=end], &ys[lo..=end]);
        if slope >= cfg.rate_threshold {
            run += 1;
            if run >= cfg.consecutive {
                return Ok(Some(Alarm { frame: end, t: ts[end], slope }));
            }
        } else {
            run = 0;
        }
    }
    Ok(None)
}

pub fn alarm_report(alarm: Option<&Alarm>, cfg: &AlarmConfig, series: &ThermalSeries) -> String {
    let mut out = String::new();
    match alarm {
        Some(a) => out.push_str(&format!("alarm: yes\ntrigger_frame: {}\ntrigger_time_s: {}\nslope_px_per_s: {}\n", a.frame, a.t, a.slope)),
        None => out.push_str("alarm: no\n"),
    }
    out.push_str(&format!(
        "window: {}\nrate_threshold: {}\nconsecutive: {}\nframes: {}\ninterval_s: {}\n",
        cfg.window,
        cfg.rate_threshold,
        cfg.consecutive,
        series.counts.len(),
        series.interval
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(pixels: &[[u8; 3]]) -> ImageBuffer {
        ImageBuffer::new(pixels.len(), 1, 3, pixels.concat()).unwrap()
    }

    #[test]
    fn hand_counts() {
        assert_eq!(count_bands(&rgb(&[[0; 3]; 5]), 128, BandRule::Threshold).unwrap(), BandCounts::new(0.0, 0, 0, 0));
        let mut px = vec![[255, 0, 0]; 10];
        px.extend([[0, 255, 0]; 6]);
        let c = count_bands(&rgb(&px), 128, BandRule::Threshold).unwrap();
        assert_eq!((c.red, c.green, c.blue, c.yellow), (10, 6, 0, 8.0));
        let w = count_bands(&rgb(&[[255; 3]; 7]), 128, BandRule::Threshold).unwrap();
        assert_eq!((w.red, w.green, w.blue, w.yellow), (7, 7, 7, 7.0));
        let d = count_bands(&rgb(&[[255; 3]; 7]), 128, BandRule::Dominant).unwrap();
        assert_eq!((d.red, d.green, d.blue), (7, 0, 0));
        assert!(count_bands(&ImageBuffer::filled(2, 2, 1, 0), 128, BandRule::Threshold).is_err());
    }

    #[test]
    fn series_checks() {
        let f = rgb(&[[200, 10, 10]; 4]);
        let s = build_series(&[f.clone(), f.clone()], 20.0, 128, BandRule::Threshold).unwrap();
        assert_eq!(s.counts[0].red, s.counts[1].red);
        assert_eq!(s.counts[1].t, 20.0);
        assert!(build_series(std::slice::from_ref(&f), 1.0, 128, BandRule::Threshold).is_err());
        assert!(build_series(&[f, rgb(&[[0; 3]; 3])], 1.0, 128, BandRule::Threshold).is_err());
        assert_eq!(ThermalSeries::from_counts(&[(2, 1, 0)], 1.0).unwrap().to_csv(), "t,red,yellow,green,blue\n0,2,1.5,1,0\n");
    }

    #[test]
    fn ramp_alarm() {
        let raw: Vec<(u64, u64, u64)> = (0..20).map(|k| if k < 10 { (100, 0, 0) } else { (100 + 50 * (k - 9), 0, 0) }).collect();
        let s = ThermalSeries::from_counts(&raw, 1.0).unwrap();
        let a = predict_flashover(&s, &AlarmConfig::default()).unwrap().unwrap();
        assert_eq!(a.frame, 10);
        let flat = ThermalSeries::from_counts(&[(5, 5, 5); 6], 1.0).unwrap();
        assert_eq!(predict_flashover(&flat, &AlarmConfig::default()).unwrap(), None);
        assert!(predict_flashover(&flat, &AlarmConfig { window: 1, ..AlarmConfig::default() }).is_err());
        assert!(alarm_report(Some(&a), &AlarmConfig::default(), &s).starts_with("alarm: yes\ntrigger_frame: 10\n"));
    }
}
