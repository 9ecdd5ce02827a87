use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{Layer, LayerInit, LayerKind, Mode, Module};
use super::spec::NetSpec;
use crate::error::{Error, Result};
use crate::tensor::{Activation, Graph, Scalar, Var};

/// Patch discriminator: `disc_depth` stride-2 conv blocks followed by a
/// stride-1 conv to a one-channel sigmoid real/fake map.
///
/// A conditioned discriminator scores `(y, x)` pairs by concatenating the
/// conditioning image onto its input; an unconditioned one sees `y` alone.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDiscriminator<T: Scalar = f32> {
    spec: NetSpec,
    conditioned: bool,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> PatchDiscriminator<T> {
    pub fn new(spec: &NetSpec, conditioned: bool, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_ch = spec.out_channels + if conditioned { spec.in_channels } else { 0 };
        let mut layers = Vec::with_capacity(spec.disc_depth + 1);
        for i in 0..spec.disc_depth {
            let out_ch = spec.base_channels * (1usize << i.min(3));
            layers.push(Layer::new(
                format!("layer{}", i + 1),
                LayerInit { kind: LayerKind::Conv, in_ch, out_ch, stride: 2, padding: 1, norm: i != 0, activation: Activation::LEAKY },
                &mut rng,
            ));
            in_ch = out_ch;
        }
        layers.push(Layer::new(
            format!("layer{}", spec.disc_depth + 1),
            LayerInit { kind: LayerKind::Conv, in_ch, out_ch: 1, stride: 1, padding: 1, norm: false, activation: Activation::Sigmoid },
            &mut rng,
        ));
        Ok(PatchDiscriminator { spec: spec.clone(), conditioned, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn conditioned(&self) -> bool {
        self.conditioned
    }

    /// Side length of the output probability map.
    pub fn output_size(&self) -> usize {
        (self.spec.input_size >> self.spec.disc_depth) - 1
    }

    fn input(&self, g: &mut Graph<T>, y: Var, x: Option<Var>) -> Result<Var> {
        match (self.conditioned, x) {
            (true, Some(x)) => g.concat(y, x),
            (false, None) => Ok(y),
            (true, None) => Err(Error::invalid("conditioned discriminator needs the input image")),
            (false, Some(_)) => Err(Error::invalid("unconditioned discriminator takes no input image")),
        }
    }

    /// Returns the probability map and the parameter bindings.
    pub fn forward(&mut self, g: &mut Graph<T>, y: Var, x: Option<Var>, mode: Mode) -> Result<(Var, Vec<Var>)> {
        let mut h = self.input(g, y, x)?;
        let mut bindings = Vec::new();
        for layer in &mut self.layers {
            h = layer.forward(g, h, mode, &mut bindings)?;
        }
        Ok((h, bindings))
    }

    pub fn forward_eval(&self, g: &mut Graph<T>, y: Var, x: Option<Var>) -> Result<Var> {
        let mut h = self.input(g, y, x)?;
        for layer in &self.layers {
            h = layer.forward_eval(g, h)?;
        }
        Ok(h)
    }

    pub fn cast<U: Scalar>(&self) -> PatchDiscriminator<U> {
        PatchDiscriminator { spec: self.spec.clone(), conditioned: self.conditioned, layers: self.layers.iter().map(Layer::cast).collect() }
    }
}

impl<T: Scalar> Module<T> for PatchDiscriminator<T> {
    fn layers(&self) -> Vec<&Layer<T>> {
        self.layers.iter().collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Layer<T>> {
        self.layers.iter_mut().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn conditioned_pair_input() {
        let spec = NetSpec::desk();
        let mut d = PatchDiscriminator::<f32>::new(&spec, true, 3).unwrap();
        let mut g = Graph::new();
        let y = g.leaf(&Tensor::zeros(&[1, 1, 32, 32]));
        let x = g.leaf(&Tensor::zeros(&[1, 1, 32, 32]));
        let (p, _) = d.forward(&mut g, y, Some(x), Mode::Train).unwrap();
        assert_eq!(g.shape(p), [1, 1, 3, 3]);
        assert_eq!(d.output_size(), 3);
        assert!(g.value(p).iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(d.forward(&mut g, y, None, Mode::Train).is_err());
    }

    #[test]
    fn unconditioned_single_channel() {
        let spec = NetSpec::desk();
        let d = PatchDiscriminator::<f32>::new(&spec, false, 3).unwrap();
        assert_eq!(d.layers()[0].in_channels(), 1);
        let mut g = Graph::new();
        let y = g.leaf(&Tensor::zeros(&[1, 1, 32, 32]));
        assert!(d.forward_eval(&mut g, y, None).is_ok());
    }
}
