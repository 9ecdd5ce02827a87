use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Mask};

pub const ISODATA_TOLERANCE: f64 = 0.5;
pub const ISODATA_MAX_ITERS: usize = 256;

/// 256-bin intensity histogram of an 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; 256],
}

impl Histogram {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        Histogram { bins }
    }

    pub fn from_image(img: &ImageBuffer) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::invalid("histogram needs a grayscale image"));
        }
        let mut bins = [0u64; 256];
        for &v in img.data() {
            bins[v as usize] += 1;
        }
        Ok(Histogram { bins })
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.weighted(0..256) / self.total() as f64
    }

    fn weighted(&self, range: std::ops::Range<usize>) -> f64 {
        range.map(|v| v as f64 * self.bins[v] as f64).sum()
    }

    /// Mean of the pixels `≤ t` and of the pixels `> t`, or `None` if either
    /// class is empty.
    pub fn class_means(&self, t: f64) -> Option<(f64, f64)> {
        let split = if t < 0.0 { 0 } else { (t.floor() as usize + 1).min(256) };
        let below: u64 = self.bins[..split].iter().sum();
        let above = self.total() - below;
        if below == 0 || above == 0 {
            return None;
        }
        Some((self.weighted(0..split) / below as f64, self.weighted(split..256) / above as f64))
    }
}

/// Iterative inter-means threshold starting from the global mean.
pub fn isodata_threshold(img: &ImageBuffer) -> Result<f64> {
    isodata_threshold_hist(&Histogram::from_image(img)?)
}

pub fn isodata_threshold_hist(hist: &Histogram) -> Result<f64> {
    if hist.bins.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::invalid("IsoData needs at least two distinct intensities"));
    }
    let mut t = hist.mean();
    for _ in 0..ISODATA_MAX_ITERS {
        let (lo, hi) = hist.class_means(t).ok_or_else(|| Error::invalid(format!("IsoData threshold {t} leaves an empty class")))?;
        let next = (lo + hi) / 2.0;
        let done = (next - t).abs() < ISODATA_TOLERANCE;
        t = next;
        if done {
            break;
        }
    }
    Ok(t)
}

/// Foreground iff value `> t`.
pub fn apply_threshold(img: &ImageBuffer, t: f64) -> Result<Mask> {
    if img.channels() != 1 {
        return Err(Error::invalid("thresholding needs a grayscale image"));
    }
    Ok(Mask::from_fn(img.width(), img.height(), |x, y| img.get(x, y, 0) as f64 > t))
}
