use rand::Rng;

use crate::error::Result;
use crate::tensor::{Activation, BatchNormMode, Graph, RunningStats, Scalar, Tensor, Var};

/// Weight initialisation: N(0, 0.02).
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Deconv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub stats: RunningStats<T>,
}

/// 4×4 (de)convolution, optional batch norm, activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T: Scalar> {
    pub name: String,
    pub kind: LayerKind,
    pub weight: Tensor<T>,
    /// Present only on layers without batch norm.
    pub bias: Option<Tensor<T>>,
    pub norm: Option<Norm<T>>,
    pub activation: Activation,
    pub stride: usize,
    pub padding: usize,
}

pub(crate) struct LayerInit {
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub padding: usize,
    pub norm: bool,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub(crate) fn new<R: Rng + ?Sized>(name: String, init: LayerInit, rng: &mut R) -> Self {
        let shape = match init.kind {
            LayerKind::Conv => [init.out_ch, init.in_ch, 4, 4],
            LayerKind::Deconv => [init.in_ch, init.out_ch, 4, 4],
        };
        let weight = Tensor::randn(&shape, 0.0, INIT_STD, rng).into_param();
        let (bias, norm) = if init.norm {
            let norm = Norm {
                gamma: Tensor::full(&[init.out_ch], T::one()).into_param(),
                beta: Tensor::zeros(&[init.out_ch]).into_param(),
                stats: RunningStats::new(init.out_ch),
            };
            (None, Some(norm))
        } else {
            (Some(Tensor::zeros(&[init.out_ch]).into_param()), None)
        };
        Layer { name, kind: init.kind, weight, bias, norm, activation: init.activation, stride: init.stride, padding: init.padding }
    }

    pub fn out_channels(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.weight.shape()[0],
            LayerKind::Deconv => self.weight.shape()[1],
        }
    }

    pub fn in_channels(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.weight.shape()[1],
            LayerKind::Deconv => self.weight.shape()[0],
        }
    }

    /// Binds parameters into `g` (appending them to `bind` in
    /// [`Layer::params`] order) and applies the layer.
    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode, bind: &mut Vec<Var>) -> Result<Var> {
        let w = g.param(&self.weight);
        bind.push(w);
        let mut h = match self.kind {
            LayerKind::Conv => g.conv2d(x, w, self.stride, self.padding)?,
            LayerKind::Deconv => g.deconv2d(x, w, self.stride, self.padding)?,
        };
        if let Some(b) = &self.bias {
            let bv = g.param(b);
            bind.push(bv);
            h = g.channel_bias(h, bv)?;
        }
        if let Some(norm) = &mut self.norm {
            let gv = g.param(&norm.gamma);
            let bv = g.param(&norm.beta);
            bind.push(gv);
            bind.push(bv);
            let bn = match mode {
                Mode::Train => BatchNormMode::Train(&mut norm.stats),
                Mode::Eval => BatchNormMode::Eval(&norm.stats),
            };
            h = g.batch_norm(h, gv, bv, bn)?;
        }
        if self.activation != Activation::Identity {
            h = g.activation(h, self.activation)?;
        }
        Ok(h)
    }

    /// Inference-only forward; never touches running statistics.
    pub fn forward_eval(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.leaf(&self.weight);
        let mut h = match self.kind {
            LayerKind::Conv => g.conv2d(x, w, self.stride, self.padding)?,
            LayerKind::Deconv => g.deconv2d(x, w, self.stride, self.padding)?,
        };
        if let Some(b) = &self.bias {
            let bv = g.leaf(b);
            h = g.channel_bias(h, bv)?;
        }
        if let Some(norm) = &self.norm {
            let gv = g.leaf(&norm.gamma);
            let bv = g.leaf(&norm.beta);
            h = g.batch_norm(h, gv, bv, BatchNormMode::Eval(&norm.stats))?;
        }
        if self.activation != Activation::Identity {
            h = g.activation(h, self.activation)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.weight];
        out.extend(self.bias.as_ref());
        if let Some(n) = &self.norm {
            out.push(&n.gamma);
            out.push(&n.beta);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.weight];
        out.extend(self.bias.as_mut());
        if let Some(n) = &mut self.norm {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<_>>();
        Layer {
            name: self.name.clone(),
            kind: self.kind,
            weight: self.weight.cast(),
            bias: self.bias.as_ref().map(Tensor::cast),
            norm: self.norm.as_ref().map(|n| Norm {
                gamma: n.gamma.cast(),
                beta: n.beta.cast(),
                stats: RunningStats { mean: conv(&n.stats.mean), var: conv(&n.stats.var), momentum: n.stats.momentum, eps: n.stats.eps },
            }),
            activation: self.activation,
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Anything built from an ordered list of [`Layer`]s.
pub trait Module<T: Scalar> {
    fn layers(&self) -> Vec<&Layer<T>>;
    fn layers_mut(&mut self) -> Vec<&mut Layer<T>>;

    fn params(&self) -> Vec<&Tensor<T>> {
        self.layers().into_iter().flat_map(Layer::params).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers_mut().into_iter().flat_map(Layer::params_mut).collect()
    }

    fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Adds the gradients of a finished backward pass into the parameters.
    fn accumulate_grads(&mut self, g: &Graph<T>, bindings: &[Var]) {
        let params = self.params_mut();
        debug_assert_eq!(params.len(), bindings.len());
        for (p, &v) in params.into_iter().zip(bindings) {
            if let Some(grad) = g.grad(v) {
                p.accumulate_grad(grad);
            }
        }
    }
}
