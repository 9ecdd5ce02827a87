use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam hyper-parameters {self:?}")))
        }
    }
}

/// Adam with bias correction. Moment buffers are created for a fixed
/// parameter list and must be stepped with the same list.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Scalar = f32> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub(crate) m: Vec<Vec<T>>,
    pub(crate) v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params.into_iter().map(|p| (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()])).unzip();
        Adam { config, step_count: 0, m, v }
    }

    /// Restores an optimizer from saved moments.
    pub fn from_parts(config: AdamConfig, step_count: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::invalid("first and second moment buffers disagree"));
        }
        Ok(Adam { config, step_count, m, v })
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// One update using each parameter's accumulated gradient. Gradients
    /// are left in place.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::invalid(format!("optimizer holds moment buffers for {} parameters, got {}", self.m.len(), params.len())));
        }
        for (i, p) in params.iter().enumerate() {
            if p.numel() != self.m[i].len() {
                return Err(Error::invalid(format!("missing moment buffers for parameter {i} of shape {:?}", p.shape())));
            }
        }
        self.step_count += 1;
        let c = &self.config;
        let t = self.step_count as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad().to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                let g = grad[k];
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f32>::full(&[3], 1.5).into_param();
        let mut opt = Adam::new(AdamConfig::default(), [&p]);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data(), [1.5; 3]);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::<f64>::scalar(0.0).into_param();
        p.grad_mut()[0] = 1.0;
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg, [&p]);
        opt.step(&mut [&mut p]).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-7, "{}", p.data()[0]);
        // gradient survives the step
        assert_eq!(p.grad()[0], 1.0);
    }

    #[test]
    fn constant_gradient_descends_monotonically() {
        let mut p = Tensor::<f64>::scalar(1.0).into_param();
        p.grad_mut()[0] = 0.5;
        let mut opt = Adam::new(AdamConfig::default(), [&p]);
        let mut prev = p.data()[0];
        for _ in 0..2 {
            opt.step(&mut [&mut p]).unwrap();
            assert!(p.data()[0] < prev);
            prev = p.data()[0];
        }
        assert_eq!(opt.step_count, 2);
    }

    #[test]
    fn mismatched_params_rejected() {
        let a = Tensor::<f32>::zeros(&[2]);
        let mut b = Tensor::<f32>::zeros(&[3]);
        let mut opt = Adam::new(AdamConfig::default(), [&a]);
        assert!(opt.step(&mut [&mut b]).is_err());
        let mut c = Tensor::<f32>::zeros(&[2]);
        assert!(opt.step(&mut [&mut c, &mut b]).is_err());
    }
}
