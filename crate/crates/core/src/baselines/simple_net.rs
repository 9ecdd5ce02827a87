use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Mask, Rect};

/// Side of the square intensity window fed to the network.
pub const WINDOW: usize = 5;
pub const HIDDEN_UNITS: usize = 25;
const INPUTS: usize = WINDOW * WINDOW;

/// A window of intensities in `[−1, 1]` and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub window: [f64; INPUTS],
    pub label: bool,
}

/// One hidden layer of 25 sigmoid units and one sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleNet {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SimpleNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = (6.0 / (INPUTS + HIDDEN_UNITS) as f64).sqrt();
        let r2 = (6.0 / (HIDDEN_UNITS + 1) as f64).sqrt();
        SimpleNet {
            w1: (0..HIDDEN_UNITS * INPUTS).map(|_| rng.random_range(-r1..r1)).collect(),
            b1: vec![0.0; HIDDEN_UNITS],
            w2: (0..HIDDEN_UNITS).map(|_| rng.random_range(-r2..r2)).collect(),
            b2: 0.0,
        }
    }

    pub fn window_size(&self) -> usize {
        WINDOW
    }

    pub fn num_parameters(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn hidden(&self, x: &[f64; INPUTS]) -> [f64; HIDDEN_UNITS] {
        let mut h = [0.0; HIDDEN_UNITS];
        for (j, hj) in h.iter_mut().enumerate() {
            let w = &self.w1[j * INPUTS..(j + 1) * INPUTS];
            *hj = sigmoid(self.b1[j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
        h
    }

    /// Foreground probability for one window.
    pub fn predict(&self, x: &[f64; INPUTS]) -> f64 {
        let h = self.hidden(x);
        sigmoid(self.b2 + self.w2.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>())
    }

    #[allow(clippy::needless_range_loop)]
    fn sgd_step(&mut self, s: &WindowSample, lr: f64) {
        let x = &s.window;
        let h = self.hidden(x);
        let p = sigmoid(self.b2 + self.w2.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>());
        // BCE through a sigmoid output
        let dz = p - if s.label { 1.0 } else { 0.0 };
        for j in 0..HIDDEN_UNITS {
            let dh = dz * self.w2[j] * h[j] * (1.0 - h[j]);
            self.w2[j] -= lr * dz * h[j];
            self.b1[j] -= lr * dh;
            for (w, xi) in self.w1[j * INPUTS..(j + 1) * INPUTS].iter_mut().zip(x) {
                *w -= lr * dh * xi;
            }
        }
        self.b2 -= lr * dz;
    }
}

/// Window centred on `(x, y)` with edge replication, scaled to `[−1, 1]`.
pub fn extract_window(img: &ImageBuffer, x: usize, y: usize) -> [f64; INPUTS] {
    let r = (WINDOW / 2) as isize;
    let mut w = [0.0; INPUTS];
    for dy in -r..=r {
        for dx in -r..=r {
            let sx = (x as isize + dx).clamp(0, img.width() as isize - 1) as usize;
            let sy = (y as isize + dy).clamp(0, img.height() as isize - 1) as usize;
            w[((dy + r) * WINDOW as isize + dx + r) as usize] = img.get(sx, sy, 0) as f64 / 127.5 - 1.0;
        }
    }
    w
}

fn check_bbox(img: &ImageBuffer, bbox: &Rect) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::invalid("the simple network reads grayscale images"));
    }
    if bbox.is_empty() || !bbox.fits(img.width(), img.height()) {
        return Err(Error::invalid(format!("bounding box {bbox:?} is empty or outside the {}×{} image", img.width(), img.height())));
    }
    Ok(())
}

/// Every pixel inside `bbox` as a labelled window.
pub fn simple_net_samples(img: &ImageBuffer, gt: &Mask, bbox: &Rect) -> Result<Vec<WindowSample>> {
    check_bbox(img, bbox)?;
    if gt.width() != img.width() || gt.height() != img.height() {
        return Err(Error::invalid("mask and image differ in size"));
    }
    let mut out = Vec::with_capacity(bbox.width * bbox.height);
    for y in bbox.y..bbox.y + bbox.height {
        for x in bbox.x..bbox.x + bbox.width {
            out.push(WindowSample { window: extract_window(img, x, y), label: gt.get(x, y) });
        }
    }
    Ok(out)
}

/// Per-sample SGD on BCE, visiting samples in a seeded shuffled order.
pub fn simple_net_train(samples: &[WindowSample], epochs: usize, lr: f64, seed: u64) -> Result<SimpleNet> {
    if samples.is_empty() {
        return Err(Error::invalid("simple network needs at least one training sample"));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    let mut net = SimpleNet::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            net.sgd_step(&samples[i], lr);
        }
    }
    Ok(net)
}

/// Foreground iff the output exceeds 0.5; pixels outside `bbox` are background.
pub fn simple_net_infer(net: &SimpleNet, img: &ImageBuffer, bbox: &Rect) -> Result<Mask> {
    check_bbox(img, bbox)?;
    let mut m = Mask::empty(img.width(), img.height());
    for y in bbox.y..bbox.y + bbox.height {
        for x in bbox.x..bbox.x + bbox.width {
            m.set(x, y, net.predict(&extract_window(img, x, y)) > 0.5);
        }
    }
    Ok(m)
}
