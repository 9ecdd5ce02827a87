use super::conv::{self, ConvGeometry};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Probability clamp used by binary cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

impl Activation {
    /// Leaky ReLU with the default slope of 0.2.
    pub const LEAKY: Activation = Activation::LeakyRelu(0.2);

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu(_))
    }
}

/// Per-channel running mean and variance of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T: Scalar> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![T::zero(); channels], var: vec![T::one(); channels], momentum: 0.1, eps: 1e-5 }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

pub enum BatchNormMode<'a, T: Scalar> {
    /// Normalise with batch statistics and fold them into the running averages.
    Train(&'a mut RunningStats<T>),
    Eval(&'a RunningStats<T>),
}

enum Op<T: Scalar> {
    Leaf,
    Conv2d { input: Var, kernel: Var, geom: ConvGeometry },
    Deconv2d { input: Var, kernel: Var, geom: ConvGeometry },
    BatchNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    ChannelBias { input: Var, bias: Var },
    Act { input: Var, kind: Activation },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { input: Var, k: T },
    Sum { input: Var },
    Mean { input: Var },
    Bce { pred: Var, target: Var },
    L1 { pred: Var, target: Var },
}

struct Node<T: Scalar> {
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Tape of operations recorded during one forward pass.
///
/// Nodes are appended in execution order, so operands always precede their
/// consumers. [`Graph::backward`] may run once; afterwards gradients can be
/// read with [`Graph::grad`].
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn channels_of(shape: &[usize]) -> (usize, usize, usize) {
    // (batch, channels, plane)
    let n = shape[0];
    let c = if shape.len() > 1 { shape[1] } else { 1 };
    let plane = shape.iter().skip(2).product();
    (n, c, plane)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.0].requires_grad)
    }

    /// Leaf holding a copy of `t`; differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Op::Leaf)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t.shape().to_vec(), t.into_data(), false, Op::Leaf))
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(&n.shape, n.value.clone()).expect("node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> Result<T> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(Error::NonScalar(n.shape.clone()));
        }
        Ok(n.value[0])
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.as_ref().map(|g| g[v.0].as_slice())
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::forward(self.shape(input), self.shape(kernel), stride, padding)?;
        let mut out = vec![T::zero(); geom.output_shape().iter().product()];
        conv::forward(&geom, self.value(input), self.value(kernel), &mut out);
        let rg = self.rg(&[input, kernel]);
        Ok(self.push(geom.output_shape().to_vec(), out, rg, Op::Conv2d { input, kernel, geom }))
    }

    /// Transposed convolution; the kernel is `in_ch × out_ch × kh × kw`.
    pub fn deconv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::transposed(self.shape(input), self.shape(kernel), stride, padding)?;
        let mut out = vec![T::zero(); geom.input_shape().iter().product()];
        conv::backward_input(&geom, self.value(input), self.value(kernel), &mut out);
        let rg = self.rg(&[input, kernel]);
        Ok(self.push(geom.input_shape().to_vec(), out, rg, Op::Deconv2d { input, kernel, geom }))
    }

    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, mode: BatchNormMode<'_, T>) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 {
            return Err(Error::invalid(format!("batch_norm needs an N×C… input, got {shape:?}")));
        }
        let (n, c, plane) = channels_of(&shape);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Shape { op: "batch_norm", lhs: shape, rhs: self.shape(gamma).to_vec() });
        }
        let x = self.value(input);
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut out = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        let count = n * plane;
        let train = matches!(mode, BatchNormMode::Train(_));
        match mode {
            BatchNormMode::Train(stats) => {
                if count < 2 {
                    return Err(Error::invalid(format!(
                        "batch_norm in train mode needs at least 2 values per channel, got {count} for shape {shape:?}"
                    )));
                }
                if stats.channels() != c {
                    return Err(Error::Shape { op: "batch_norm", lhs: shape, rhs: vec![stats.channels()] });
                }
                let m = T::lit(stats.momentum);
                for ch in 0..c {
                    let mut sum = T::zero();
                    for i in 0..n {
                        sum += x[(i * c + ch) * plane..][..plane].iter().copied().sum::<T>();
                    }
                    let mean = sum / T::lit(count as f64);
                    let mut sq = T::zero();
                    for i in 0..n {
                        for &v in &x[(i * c + ch) * plane..][..plane] {
                            sq += (v - mean) * (v - mean);
                        }
                    }
                    let var = sq / T::lit(count as f64);
                    let istd = T::one() / (var + T::lit(stats.eps)).sqrt();
                    inv_std[ch] = istd;
                    let unbiased = sq / T::lit((count - 1) as f64);
                    stats.mean[ch] = (T::one() - m) * stats.mean[ch] + m * mean;
                    stats.var[ch] = (T::one() - m) * stats.var[ch] + m * unbiased;
                    for i in 0..n {
                        let base = (i * c + ch) * plane;
                        for k in base..base + plane {
                            xhat[k] = (x[k] - mean) * istd;
                            out[k] = g[ch] * xhat[k] + b[ch];
                        }
                    }
                }
            }
            BatchNormMode::Eval(stats) => {
                if stats.channels() != c {
                    return Err(Error::Shape { op: "batch_norm", lhs: shape, rhs: vec![stats.channels()] });
                }
                for ch in 0..c {
                    let istd = T::one() / (stats.var[ch] + T::lit(stats.eps)).sqrt();
                    inv_std[ch] = istd;
                    for i in 0..n {
                        let base = (i * c + ch) * plane;
                        for k in base..base + plane {
                            xhat[k] = (x[k] - stats.mean[ch]) * istd;
                            out[k] = g[ch] * xhat[k] + b[ch];
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[input, gamma, beta]);
        Ok(self.push(shape, out, rg, Op::BatchNorm { input, gamma, beta, xhat, inv_std, train }))
    }

    /// Adds `bias[c]` to every element of channel `c`.
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let (n, c, plane) = channels_of(&shape);
        if self.shape(bias) != [c] {
            return Err(Error::Shape { op: "channel_bias", lhs: shape, rhs: self.shape(bias).to_vec() });
        }
        let b = self.value(bias);
        let mut out = self.value(input).to_vec();
        for i in 0..n {
            for ch in 0..c {
                out[(i * c + ch) * plane..][..plane].iter_mut().for_each(|v| *v += b[ch]);
            }
        }
        let rg = self.rg(&[input, bias]);
        Ok(self.push(shape, out, rg, Op::ChannelBias { input, bias }))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        if let Activation::LeakyRelu(a) = kind {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::invalid(format!("leaky_relu slope must lie in (0,1), got {a}")));
            }
        }
        let out = self
            .value(input)
            .iter()
            .map(|&x| match kind {
                Activation::Identity => x,
                Activation::Relu => x.max(T::zero()),
                Activation::LeakyRelu(a) => {
                    if x > T::zero() {
                        x
                    } else {
                        T::lit(a) * x
                    }
                }
                Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
                Activation::Tanh => x.tanh(),
            })
            .collect();
        let shape = self.shape(input).to_vec();
        let rg = self.rg(&[input]);
        Ok(self.push(shape, out, rg, Op::Act { input, kind }))
    }

    /// Concatenates two NCHW tensors along the channel axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(Error::Shape { op: "concat", lhs: sa, rhs: sb });
        }
        let (n, ca, plane) = channels_of(&sa);
        let cb = sb[1];
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            out.extend_from_slice(&self.value(a)[i * ca * plane..][..ca * plane]);
            out.extend_from_slice(&self.value(b)[i * cb * plane..][..cb * plane]);
        }
        let shape = vec![n, ca + cb, sa[2], sa[3]];
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Concat { a, b }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape { op, lhs: self.shape(a).to_vec(), rhs: self.shape(b).to_vec() });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, input: Var, k: f64) -> Var {
        let k = T::lit(k);
        let out = self.value(input).iter().map(|&x| x * k).collect();
        let shape = self.shape(input).to_vec();
        let rg = self.rg(&[input]);
        self.push(shape, out, rg, Op::Scale { input, k })
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).iter().copied().sum();
        let rg = self.rg(&[input]);
        self.push(vec![1], vec![s], rg, Op::Sum { input })
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let s = v.iter().copied().sum::<T>() / T::lit(v.len() as f64);
        let rg = self.rg(&[input]);
        self.push(vec![1], vec![s], rg, Op::Mean { input })
    }

    /// `−mean(t·log p + (1−t)·log(1−p))` with `p` clamped to `[ε, 1−ε]`.
    pub fn bce(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("bce", pred, target)?;
        let eps = T::lit(BCE_EPSILON);
        let p = self.value(pred);
        let t = self.value(target);
        let total: T = p
            .iter()
            .zip(t)
            .map(|(&p, &t)| {
                let p = p.max(eps).min(T::one() - eps);
                -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
            })
            .sum();
        let loss = total / T::lit(p.len() as f64);
        let rg = self.rg(&[pred, target]);
        Ok(self.push(vec![1], vec![loss], rg, Op::Bce { pred, target }))
    }

    /// `mean |p − t|`.
    pub fn l1(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("l1", pred, target)?;
        let p = self.value(pred);
        let t = self.value(target);
        let total: T = p.iter().zip(t).map(|(&p, &t)| (p - t).abs()).sum();
        let loss = total / T::lit(p.len() as f64);
        let rg = self.rg(&[pred, target]);
        Ok(self.push(vec![1], vec![loss], rg, Op::L1 { pred, target }))
    }

    /// Which side of every non-smooth point the recorded values sit on.
    /// Two forward passes with equal signatures share one smooth branch.
    pub fn kink_signature(&self) -> Vec<bool> {
        let eps = T::lit(BCE_EPSILON);
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Act { input, kind } if kind.has_kink() => {
                    sig.extend(self.value(*input).iter().map(|&x| x > T::zero()));
                }
                Op::Bce { pred, .. } => {
                    sig.extend(self.value(*pred).iter().map(|&p| p < eps || p > T::one() - eps));
                }
                Op::L1 { pred, target } => {
                    sig.extend(self.value(*pred).iter().zip(self.value(*target)).map(|(p, t)| p > t));
                }
                _ => {}
            }
        }
        sig
    }

    /// Back-propagates from the scalar `loss`. A graph supports one backward
    /// pass; a second call fails with [`Error::GraphConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::GraphConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalar(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Vec<T>> =
            self.nodes.iter().map(|n| if n.requires_grad { vec![T::zero(); n.value.len()] } else { Vec::new() }).collect();
        if !self.node(loss).requires_grad {
            self.grads = Some(grads);
            return Ok(());
        }
        grads[loss.0][0] = T::one();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let gout = std::mem::take(&mut grads[idx]);
            self.backprop_node(node, &gout, &mut grads);
            grads[idx] = gout;
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn backprop_node(&self, node: &Node<T>, gout: &[T], grads: &mut [Vec<T>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, geom } => {
                if wants(*input) {
                    conv::backward_input(geom, gout, self.value(*kernel), &mut grads[input.0]);
                }
                if wants(*kernel) {
                    conv::backward_kernel(geom, self.value(*input), gout, &mut grads[kernel.0]);
                }
            }
            Op::Deconv2d { input, kernel, geom } => {
                if wants(*input) {
                    let mut gi = vec![T::zero(); grads[input.0].len()];
                    conv::forward(geom, gout, self.value(*kernel), &mut gi);
                    add_into(&mut grads[input.0], &gi);
                }
                if wants(*kernel) {
                    conv::backward_kernel(geom, gout, self.value(*input), &mut grads[kernel.0]);
                }
            }
            Op::BatchNorm { input, gamma, beta, xhat, inv_std, train } => {
                let (n, c, plane) = channels_of(&node.shape);
                let g = self.value(*gamma);
                let count = T::lit((n * plane) as f64);
                for ch in 0..c {
                    let idx = |i: usize| (i * c + ch) * plane..(i * c + ch + 1) * plane;
                    let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
                    for i in 0..n {
                        for k in idx(i) {
                            sum_dy += gout[k];
                            sum_dy_xhat += gout[k] * xhat[k];
                        }
                    }
                    if wants(*gamma) {
                        grads[gamma.0][ch] += sum_dy_xhat;
                    }
                    if wants(*beta) {
                        grads[beta.0][ch] += sum_dy;
                    }
                    if wants(*input) {
                        let gi = &mut grads[input.0];
                        let scale = g[ch] * inv_std[ch];
                        for i in 0..n {
                            for k in idx(i) {
                                gi[k] += if *train {
                                    scale / count * (count * gout[k] - sum_dy - xhat[k] * sum_dy_xhat)
                                } else {
                                    scale * gout[k]
                                };
                            }
                        }
                    }
                }
            }
            Op::ChannelBias { input, bias } => {
                if wants(*input) {
                    add_into(&mut grads[input.0], gout);
                }
                if wants(*bias) {
                    let (n, c, plane) = channels_of(&node.shape);
                    for i in 0..n {
                        for ch in 0..c {
                            grads[bias.0][ch] += gout[(i * c + ch) * plane..][..plane].iter().copied().sum::<T>();
                        }
                    }
                }
            }
            Op::Act { input, kind } => {
                let x = self.value(*input);
                let y = &node.value;
                let gi = &mut grads[input.0];
                for k in 0..gi.len() {
                    let d = match kind {
                        Activation::Identity => T::one(),
                        Activation::Relu => {
                            if x[k] > T::zero() {
                                T::one()
                            } else {
                                T::zero()
                            }
                        }
                        Activation::LeakyRelu(a) => {
                            if x[k] > T::zero() {
                                T::one()
                            } else {
                                T::lit(*a)
                            }
                        }
                        Activation::Sigmoid => y[k] * (T::one() - y[k]),
                        Activation::Tanh => T::one() - y[k] * y[k],
                    };
                    gi[k] += d * gout[k];
                }
            }
            Op::Concat { a, b } => {
                let (n, ca, plane) = channels_of(self.shape(*a));
                let cb = self.shape(*b)[1];
                let (la, lb) = (ca * plane, cb * plane);
                for i in 0..n {
                    let row = &gout[i * (la + lb)..][..la + lb];
                    if wants(*a) {
                        add_into(&mut grads[a.0][i * la..][..la], &row[..la]);
                    }
                    if wants(*b) {
                        add_into(&mut grads[b.0][i * lb..][..lb], &row[la..]);
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if wants(*v) {
                        add_into(&mut grads[v.0], gout);
                    }
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    for (k, g) in grads[a.0].iter_mut().enumerate() {
                        *g += gout[k] * vb[k];
                    }
                }
                if wants(*b) {
                    for (k, g) in grads[b.0].iter_mut().enumerate() {
                        *g += gout[k] * va[k];
                    }
                }
            }
            Op::Scale { input, k } => {
                for (g, &d) in grads[input.0].iter_mut().zip(gout) {
                    *g += *k * d;
                }
            }
            Op::Sum { input } => {
                grads[input.0].iter_mut().for_each(|g| *g += gout[0]);
            }
            Op::Mean { input } => {
                let d = gout[0] / T::lit(grads[input.0].len() as f64);
                grads[input.0].iter_mut().for_each(|g| *g += d);
            }
            Op::Bce { pred, target } => {
                // Derivative of the clamped-probability loss, evaluated at the
                // clamped p so saturated sigmoids still pass a gradient.
                let eps = T::lit(BCE_EPSILON);
                let (p, t) = (self.value(*pred), self.value(*target));
                let scale = gout[0] / T::lit(p.len() as f64);
                let clamp = |p: T| p.max(eps).min(T::one() - eps);
                if wants(*pred) {
                    for (k, g) in grads[pred.0].iter_mut().enumerate() {
                        let pc = clamp(p[k]);
                        *g += scale * ((pc - t[k]) / (pc * (T::one() - pc)));
                    }
                }
                if wants(*target) {
                    for (k, g) in grads[target.0].iter_mut().enumerate() {
                        let pc = clamp(p[k]);
                        *g += scale * ((T::one() - pc).ln() - pc.ln());
                    }
                }
            }
            Op::L1 { pred, target } => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let scale = gout[0] / T::lit(p.len() as f64);
                let sign = |d: T| {
                    if d > T::zero() {
                        T::one()
                    } else if d < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                };
                if wants(*pred) {
                    for (k, g) in grads[pred.0].iter_mut().enumerate() {
                        *g += scale * sign(p[k] - t[k]);
                    }
                }
                if wants(*target) {
                    for (k, g) in grads[target.0].iter_mut().enumerate() {
                        *g -= scale * sign(p[k] - t[k]);
                    }
                }
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[1, 1, 4, 4], (0..16).map(f64::from).collect()));
        let k = g.leaf(&t(&[1, 1, 1, 1], vec![1.0]));
        let y = g.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn conv_ones_stride_two() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&Tensor::full(&[1, 1, 4, 4], 1.0));
        let k = g.leaf(&Tensor::full(&[1, 1, 2, 2], 1.0));
        let y = g.conv2d(x, k, 2, 0).unwrap();
        assert_eq!(g.shape(y), [1, 1, 2, 2]);
        assert_eq!(g.value(y), [4.0; 4]);
    }

    #[test]
    fn conv_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&Tensor::zeros(&[1, 2, 4, 4]));
        let k = g.leaf(&Tensor::zeros(&[1, 3, 2, 2]));
        let msg = g.conv2d(x, k, 1, 0).unwrap_err().to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 2, 2]"));
    }

    #[test]
    fn deconv_unit_kernel_and_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let k = g.leaf(&t(&[1, 1, 1, 1], vec![1.0]));
        let y = g.deconv2d(x, k, 1, 0).unwrap();
        assert_eq!(g.value(y), [1.0, 2.0, 3.0, 4.0]);

        let ones = g.leaf(&Tensor::full(&[1, 1, 2, 2], 1.0));
        let k2 = g.leaf(&Tensor::full(&[1, 1, 2, 2], 1.0));
        let y2 = g.deconv2d(ones, k2, 2, 0).unwrap();
        assert_eq!(g.shape(y2), [1, 1, 4, 4]);
        assert_eq!(g.value(y2), [1.0; 16]);
    }

    fn bn(values: Vec<f64>, gamma: f64, beta: f64) -> Vec<f64> {
        let n = values.len();
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[n, 1], values));
        let ga = g.leaf(&t(&[1], vec![gamma]));
        let be = g.leaf(&t(&[1], vec![beta]));
        let mut stats = RunningStats::new(1);
        let y = g.batch_norm(x, ga, be, BatchNormMode::Train(&mut stats)).unwrap();
        g.value(y).to_vec()
    }

    #[test]
    fn batch_norm_examples() {
        assert!(bn(vec![3.0; 4], 1.0, 0.0).iter().all(|&v| v == 0.0));
        let out = bn(vec![1.0, 3.0], 1.0, 0.0);
        assert!((out[0] + 1.0).abs() < 1e-5 && (out[1] - 1.0).abs() < 1e-5, "{out:?}");
        let out = bn(vec![1.0, 3.0], 2.0, 5.0);
        assert!((out[0] - 3.0).abs() < 1e-4 && (out[1] - 7.0).abs() < 1e-4, "{out:?}");
    }

    #[test]
    fn batch_norm_single_element_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[1, 1, 1, 1], vec![2.0]));
        let ga = g.leaf(&t(&[1], vec![1.0]));
        let be = g.leaf(&t(&[1], vec![0.0]));
        let mut stats = RunningStats::new(1);
        assert!(g.batch_norm(x, ga, be, BatchNormMode::Train(&mut stats)).is_err());
        // Eval mode needs no batch statistics.
        assert!(g.batch_norm(x, ga, be, BatchNormMode::Eval(&stats)).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[2, 1], vec![1.0, 3.0]));
        let ga = g.leaf(&t(&[1], vec![1.0]));
        let be = g.leaf(&t(&[1], vec![0.0]));
        let mut stats = RunningStats::new(1);
        g.batch_norm(x, ga, be, BatchNormMode::Train(&mut stats)).unwrap();
        assert!((stats.mean[0] - 0.2).abs() < 1e-12);
        // unbiased variance of {1,3} is 2
        assert!((stats.var[0] - (0.9 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn activations() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[3], vec![-2.0, 3.0, 0.0]));
        let r = g.activation(x, Activation::Relu).unwrap();
        assert_eq!(&g.value(r)[..2], [0.0, 3.0]);
        let l = g.activation(x, Activation::LEAKY).unwrap();
        assert!((g.value(l)[0] + 0.4).abs() < 1e-12);
        let s = g.activation(x, Activation::Sigmoid).unwrap();
        assert_eq!(g.value(s)[2], 0.5);
        assert!(g.activation(x, Activation::LeakyRelu(1.5)).is_err());
    }

    #[test]
    fn bce_and_l1_values() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(&t(&[1], vec![1.0 - BCE_EPSILON]));
        let one = g.leaf(&t(&[1], vec![1.0]));
        let l = g.bce(p, one).unwrap();
        assert!(g.scalar(l).unwrap() < 1e-6);

        let half = g.leaf(&Tensor::full(&[4], 0.5));
        let tgt = g.leaf(&t(&[4], vec![0.0, 1.0, 1.0, 0.0]));
        let l = g.bce(half, tgt).unwrap();
        assert!((g.scalar(l).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        let l1 = g.l1(tgt, tgt).unwrap();
        assert_eq!(g.scalar(l1).unwrap(), 0.0);
    }

    #[test]
    fn backward_sum_and_square() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[3], vec![1.0, -2.0, 5.0]).into_param());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), [1.0; 3]);

        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[1], vec![3.0]).into_param());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), [6.0]);
    }

    #[test]
    fn second_backward_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[2], vec![1.0, 2.0]).into_param());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(Error::GraphConsumed)));
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&t(&[2], vec![1.0, 2.0]).into_param());
        assert!(matches!(g.backward(x), Err(Error::NonScalar(_))));
    }

    #[test]
    fn concat_channels() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(&t(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = g.leaf(&t(&[2, 1, 1, 2], vec![5.0, 6.0, 7.0, 8.0]));
        let c = g.concat(a, b).unwrap();
        assert_eq!(g.shape(c), [2, 2, 1, 2]);
        assert_eq!(g.value(c), [1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
    }
}
