use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{Layer, LayerInit, LayerKind, Mode, Module};
use super::spec::NetSpec;
use crate::error::{Error, Result};
use crate::tensor::{Activation, Graph, Scalar, Tensor, Var};

/// U-Net generator: stride-2 conv encoder, stride-2 deconv decoder, skip
/// connections concatenated into mirror decoder layers, `tanh` output.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetGenerator<T: Scalar = f32> {
    spec: NetSpec,
    encoder: Vec<Layer<T>>,
    decoder: Vec<Layer<T>>,
}

/// Node handles produced by one generator pass.
#[derive(Clone, Debug)]
pub struct GeneratorPass {
    pub output: Var,
    /// Outputs of encoder layers `1..=depth`.
    pub encoder: Vec<Var>,
    /// Outputs of decoder layers `1..=depth`; the last equals `output`.
    pub decoder: Vec<Var>,
    /// Parameter nodes in [`Module::params`] order (empty for eval passes).
    pub bindings: Vec<Var>,
}

#[derive(Clone, Copy)]
enum Side {
    Encoder,
    Decoder,
}

fn wire<T, F>(spec: &NetSpec, g: &mut Graph<T>, input: Var, zero_bottleneck: bool, mut apply: F) -> Result<(Vec<Var>, Vec<Var>)>
where
    T: Scalar,
    F: FnMut(&mut Graph<T>, Side, usize, Var) -> Result<Var>,
{
    let mut encoder = Vec::with_capacity(spec.depth);
    let mut h = input;
    for i in 0..spec.depth {
        h = apply(g, Side::Encoder, i, h)?;
        encoder.push(h);
    }
    if zero_bottleneck {
        h = g.scale(h, 0.0);
    }
    let mut decoder = Vec::with_capacity(spec.depth);
    for j in 0..spec.depth {
        if let Some(e) = spec.skip_into_decoder(j) {
            h = g.concat(h, encoder[e - 1])?;
        }
        h = apply(g, Side::Decoder, j, h)?;
        decoder.push(h);
    }
    Ok((encoder, decoder))
}

impl<T: Scalar> UNetGenerator<T> {
    /// Builds a generator with N(0, 0.02) weights drawn from `seed`.
    pub fn new(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_ch = spec.encoder_channels();
        let d = spec.depth;
        let mut encoder = Vec::with_capacity(d);
        let mut in_ch = spec.generator_in_channels();
        for (i, &out_ch) in enc_ch.iter().enumerate() {
            // No batch norm on the first layer or on the bottleneck, whose
            // 1×1 maps would leave a single value per channel.
            let norm = i != 0 && i != d - 1;
            encoder.push(Layer::new(
                format!("enc{}", i + 1),
                LayerInit { kind: LayerKind::Conv, in_ch, out_ch, stride: 2, padding: 1, norm, activation: Activation::LEAKY },
                &mut rng,
            ));
            in_ch = out_ch;
        }
        let mut decoder = Vec::with_capacity(d);
        for j in 0..d {
            if let Some(e) = spec.skip_into_decoder(j) {
                in_ch += enc_ch[e - 1];
            }
            let last = j == d - 1;
            let out_ch = if last { spec.out_channels } else { enc_ch[d - j - 2] };
            decoder.push(Layer::new(
                format!("dec{}", j + 1),
                LayerInit {
                    kind: LayerKind::Deconv,
                    in_ch,
                    out_ch,
                    stride: 2,
                    padding: 1,
                    norm: !last,
                    activation: if last { Activation::Tanh } else { Activation::Relu },
                },
                &mut rng,
            ));
            in_ch = out_ch;
        }
        Ok(UNetGenerator { spec: spec.clone(), encoder, decoder })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &[Layer<T>] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[Layer<T>] {
        &self.decoder
    }

    fn check_input(&self, g: &Graph<T>, input: Var) -> Result<()> {
        let s = g.shape(input);
        let want = [self.spec.generator_in_channels(), self.spec.input_size, self.spec.input_size];
        if s.len() != 4 || s[1..] != want {
            return Err(Error::Shape { op: "generator input", lhs: s.to_vec(), rhs: [&[0usize][..], &want[..]].concat() });
        }
        Ok(())
    }

    pub fn forward(&mut self, g: &mut Graph<T>, input: Var, mode: Mode) -> Result<GeneratorPass> {
        self.forward_with(g, input, mode, false)
    }

    /// Forward pass; with `zero_bottleneck` the innermost activations are
    /// replaced by zeros so only skip pathways carry information.
    pub fn forward_with(&mut self, g: &mut Graph<T>, input: Var, mode: Mode, zero_bottleneck: bool) -> Result<GeneratorPass> {
        self.check_input(g, input)?;
        let mut bindings = Vec::new();
        let (enc, dec) = (&mut self.encoder, &mut self.decoder);
        let (encoder, decoder) = wire(&self.spec, g, input, zero_bottleneck, |g, side, i, x| match side {
            Side::Encoder => enc[i].forward(g, x, mode, &mut bindings),
            Side::Decoder => dec[i].forward(g, x, mode, &mut bindings),
        })?;
        Ok(GeneratorPass { output: *decoder.last().expect("depth ≥ 1"), encoder, decoder, bindings })
    }

    /// Read-only inference pass using running batch-norm statistics.
    pub fn forward_eval(&self, g: &mut Graph<T>, input: Var, zero_bottleneck: bool) -> Result<GeneratorPass> {
        self.check_input(g, input)?;
        let (encoder, decoder) = wire(&self.spec, g, input, zero_bottleneck, |g, side, i, x| match side {
            Side::Encoder => self.encoder[i].forward_eval(g, x),
            Side::Decoder => self.decoder[i].forward_eval(g, x),
        })?;
        Ok(GeneratorPass { output: *decoder.last().expect("depth ≥ 1"), encoder, decoder, bindings: Vec::new() })
    }

    /// Eval-mode output for an NCHW batch.
    pub fn generate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.leaf(x);
        let pass = self.forward_eval(&mut g, xv, false)?;
        Ok(g.tensor(pass.output))
    }

    pub fn cast<U: Scalar>(&self) -> UNetGenerator<U> {
        UNetGenerator {
            spec: self.spec.clone(),
            encoder: self.encoder.iter().map(Layer::cast).collect(),
            decoder: self.decoder.iter().map(Layer::cast).collect(),
        }
    }
}

impl<T: Scalar> Module<T> for UNetGenerator<T> {
    fn layers(&self) -> Vec<&Layer<T>> {
        self.encoder.iter().chain(&self.decoder).collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Layer<T>> {
        self.encoder.iter_mut().chain(&mut self.decoder).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_generator_shapes() {
        let spec = NetSpec::desk();
        let mut gen = UNetGenerator::<f32>::new(&spec, 1).unwrap();
        assert_eq!(gen.encoder().len(), 5);
        assert_eq!(gen.decoder().len(), 5);
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::zeros(&[2, 1, 32, 32]));
        let pass = gen.forward(&mut g, x, Mode::Train).unwrap();
        assert_eq!(g.shape(pass.encoder[4]), [2, 128, 1, 1]);
        assert_eq!(g.shape(pass.output), [2, 1, 32, 32]);
        assert_eq!(pass.bindings.len(), gen.params().len());
        assert!(g.value(pass.output).iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn wrong_input_rejected() {
        let gen = UNetGenerator::<f32>::new(&NetSpec::square(3, 16, 4), 1).unwrap();
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::zeros(&[1, 1, 8, 8]));
        assert!(gen.forward_eval(&mut g, x, false).is_err());
    }

    #[test]
    fn parameter_count_is_function_of_spec() {
        let spec = NetSpec::square(4, 16, 8);
        let a = UNetGenerator::<f32>::new(&spec, 1).unwrap();
        let b = UNetGenerator::<f32>::new(&spec, 2).unwrap();
        assert_eq!(a.num_parameters(), b.num_parameters());
        assert_ne!(a, b);
        let mut no_skip = spec.clone();
        no_skip.skip_pairs.clear();
        assert!(UNetGenerator::<f32>::new(&no_skip, 1).unwrap().num_parameters() < a.num_parameters());
    }

    #[test]
    fn full_scale_builds() {
        let gen = UNetGenerator::<f32>::new(&NetSpec::full_scale(), 0).unwrap();
        assert_eq!(gen.encoder().len(), 9);
        assert_eq!(gen.decoder().len(), 9);
        // decoder 9 receives decoder 8 output concatenated with encoder 1
        let d9 = &gen.decoder()[8];
        assert_eq!(d9.in_channels(), 64 + 64);
        assert_eq!(d9.out_channels(), 1);
    }

    #[test]
    fn activations_follow_roles() {
        let gen = UNetGenerator::<f32>::new(&NetSpec::desk(), 0).unwrap();
        assert!(gen.encoder().iter().all(|l| l.activation == Activation::LEAKY));
        let (last, rest) = gen.decoder().split_last().unwrap();
        assert!(rest.iter().all(|l| l.activation == Activation::Relu && l.norm.is_some()));
        assert_eq!(last.activation, Activation::Tanh);
    }
}
