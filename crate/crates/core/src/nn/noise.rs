use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::NoiseMode;
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Seeded source of the generator's random input.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    seed: u64,
    mode: NoiseMode,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(seed: u64, mode: NoiseMode) -> Self {
        NoiseSource { seed, mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn none() -> Self {
        Self::new(0, NoiseMode::None)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    /// Standard-normal tensor.
    pub fn draw<T: Scalar>(&mut self, shape: &[usize]) -> Tensor<T> {
        Tensor::randn(shape, 0.0, 1.0, &mut self.rng)
    }

    /// Appends a noise channel to an NCHW batch when the mode asks for one.
    pub fn condition<T: Scalar>(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        if self.mode == NoiseMode::None {
            return Ok(x);
        }
        let s = x.shape().to_vec();
        let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
        let z: Tensor<T> = self.draw(&[n, 1, s[2], s[3]]);
        let mut data = Vec::with_capacity(n * (c + 1) * plane);
        for i in 0..n {
            data.extend_from_slice(&x.data()[i * c * plane..][..c * plane]);
            data.extend_from_slice(&z.data()[i * plane..][..plane]);
        }
        Tensor::new(&[n, c + 1, s[2], s[3]], data)
    }
}
