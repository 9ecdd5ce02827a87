//! The shipped finite-difference suite: every differentiable tape operation
//! plus end-to-end generator and discriminator passes, checked in `f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Mode, NetSpec, PatchDiscriminator, UNetGenerator};
use crate::tensor::{finite_difference_check, Activation, BatchNormMode, GradCheck, Graph, RunningStats, Tensor, Var, DEFAULT_STEP};

/// Relative-error bound every case must meet.
pub const SUITE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteCase {
    pub name: &'static str,
    pub check: GradCheck,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.check.checked > 0 && self.check.max_rel_error < SUITE_TOLERANCE
    }
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// Contracts `y` with a fixed random tensor so every output coordinate
/// carries a distinct weight.
fn project(g: &mut Graph<f64>, y: Var, w: &Tensor<f64>) -> Result<Var> {
    let wv = g.constant(w.shape(), w.data().to_vec())?;
    let p = g.mul(y, wv)?;
    Ok(g.sum(p))
}

type Body = Box<dyn FnMut(&mut Graph<f64>, Var) -> Result<Var>>;

struct Case {
    name: &'static str,
    point: Tensor<f64>,
    f: Body,
}

fn case(name: &'static str, point: Tensor<f64>, f: impl FnMut(&mut Graph<f64>, Var) -> Result<Var> + 'static) -> Case {
    Case { name, point, f: Box::new(f) }
}

fn cases() -> Result<Vec<Case>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let r = &mut rng;
    let mut out = Vec::new();

    let x = rand_t(&[1, 2, 6, 6], r);
    let k = rand_t(&[3, 2, 4, 4], r);
    let w = rand_t(&[1, 3, 3, 3], r);
    {
        let (k, w) = (k.clone(), w.clone());
        out.push(case("conv2d/input", x.clone(), move |g, v| {
            let kv = g.leaf(&k);
            let y = g.conv2d(v, kv, 2, 1)?;
            project(g, y, &w)
        }));
    }
    {
        let (x, w) = (x.clone(), w.clone());
        out.push(case("conv2d/kernel", k.clone(), move |g, v| {
            let xv = g.leaf(&x);
            let y = g.conv2d(xv, v, 2, 1)?;
            project(g, y, &w)
        }));
    }

    let dx = rand_t(&[1, 3, 3, 3], r);
    let dk = rand_t(&[3, 2, 4, 4], r);
    let dw = rand_t(&[1, 2, 6, 6], r);
    {
        let (dk, dw) = (dk.clone(), dw.clone());
        out.push(case("deconv2d/input", dx.clone(), move |g, v| {
            let kv = g.leaf(&dk);
            let y = g.deconv2d(v, kv, 2, 1)?;
            project(g, y, &dw)
        }));
    }
    {
        let (dx, dw) = (dx.clone(), dw.clone());
        out.push(case("deconv2d/kernel", dk, move |g, v| {
            let xv = g.leaf(&dx);
            let y = g.deconv2d(xv, v, 2, 1)?;
            project(g, y, &dw)
        }));
    }

    let bx = rand_t(&[2, 3, 2, 2], r);
    let gamma = Tensor::uniform(&[3], 0.5, 1.5, r);
    let beta = rand_t(&[3], r);
    let bw = rand_t(&[2, 3, 2, 2], r);
    let bn = |input: usize, train: bool| {
        let (bx, gamma, beta, bw) = (bx.clone(), gamma.clone(), beta.clone(), bw.clone());
        let mut stats = RunningStats::new(3);
        stats.mean = vec![0.1, -0.2, 0.3];
        stats.var = vec![0.5, 1.5, 2.0];
        move |g: &mut Graph<f64>, v: Var| {
            let mut slots = [g.leaf(&bx), g.leaf(&gamma), g.leaf(&beta)];
            slots[input] = v;
            let mode = if train { BatchNormMode::Train(&mut stats) } else { BatchNormMode::Eval(&stats) };
            let y = g.batch_norm(slots[0], slots[1], slots[2], mode)?;
            project(g, y, &bw)
        }
    };
    out.push(case("batch_norm/train/input", bx.clone(), bn(0, true)));
    out.push(case("batch_norm/train/gamma", gamma.clone(), bn(1, true)));
    out.push(case("batch_norm/train/beta", beta.clone(), bn(2, true)));
    out.push(case("batch_norm/eval/input", bx.clone(), bn(0, false)));

    {
        let (bx, bw) = (bx.clone(), bw.clone());
        out.push(case("channel_bias", beta.clone(), move |g, v| {
            let xv = g.leaf(&bx);
            let y = g.channel_bias(xv, v)?;
            project(g, y, &bw)
        }));
    }

    let ax = rand_t(&[1, 2, 3, 3], r);
    let aw = rand_t(&[1, 2, 3, 3], r);
    for (name, kind) in
        [("relu", Activation::Relu), ("leaky_relu", Activation::LEAKY), ("sigmoid", Activation::Sigmoid), ("tanh", Activation::Tanh)]
    {
        let aw = aw.clone();
        out.push(case(name, ax.clone(), move |g, v| {
            let y = g.activation(v, kind)?;
            project(g, y, &aw)
        }));
    }

    let other = rand_t(&[1, 2, 3, 3], r);
    let cw = rand_t(&[1, 4, 3, 3], r);
    {
        let other = other.clone();
        out.push(case("concat", ax.clone(), move |g, v| {
            let b = g.leaf(&other);
            let y = g.concat(b, v)?;
            project(g, y, &cw)
        }));
    }
    {
        let (other, aw) = (other.clone(), aw.clone());
        out.push(case("add", ax.clone(), move |g, v| {
            let b = g.leaf(&other);
            let y = g.add(v, b)?;
            project(g, y, &aw)
        }));
    }
    {
        let (other, aw) = (other.clone(), aw.clone());
        out.push(case("mul", ax.clone(), move |g, v| {
            let b = g.leaf(&other);
            let y = g.mul(v, b)?;
            let y = g.mul(y, v)?;
            project(g, y, &aw)
        }));
    }
    {
        let aw = aw.clone();
        out.push(case("scale+mean", ax.clone(), move |g, v| {
            let y = g.scale(v, -2.5);
            let y = g.mul(y, v)?;
            let wv = g.constant(aw.shape(), aw.data().to_vec())?;
            let y = g.mul(y, wv)?;
            Ok(g.mean(y))
        }));
    }

    let target = Tensor::uniform(&[1, 1, 3, 3], 0.0, 1.0, r);
    {
        let target = target.clone();
        out.push(case("bce", rand_t(&[1, 1, 3, 3], r), move |g, v| {
            let p = g.activation(v, Activation::Sigmoid)?;
            let t = g.leaf(&target);
            g.bce(p, t)
        }));
    }
    out.push(case("l1", rand_t(&[1, 1, 3, 3], r), move |g, v| {
        let t = g.leaf(&target);
        g.l1(v, t)
    }));

    let spec = NetSpec { disc_depth: 2, ..NetSpec::square(3, 8, 2) };
    let mut gen = UNetGenerator::<f64>::new(&spec, 7)?;
    let gx = rand_t(&[2, spec.generator_in_channels(), 8, 8], r);
    let gt = rand_t(&[2, spec.out_channels, 8, 8], r);
    out.push(case("generator/input", gx, move |g, v| {
        let pass = gen.forward(g, v, Mode::Train)?;
        let t = g.leaf(&gt);
        g.l1(pass.output, t)
    }));

    let dspec = NetSpec { input_size: 16, ..spec };
    let mut disc = PatchDiscriminator::<f64>::new(&dspec, true, 9)?;
    let cond = rand_t(&[2, dspec.in_channels, 16, 16], r);
    let dy = rand_t(&[2, dspec.out_channels, 16, 16], r);
    let pw = rand_t(&[2, 1, disc.output_size(), disc.output_size()], r);
    out.push(case("discriminator/sample", dy, move |g, v| {
        let c = g.leaf(&cond);
        let (p, _) = disc.forward(g, v, Some(c), Mode::Train)?;
        project(g, p, &pw)
    }));
    Ok(out)
}

/// Runs every case. Each result records the worst relative error over the
/// coordinates whose perturbation stayed clear of kinks.
pub fn gradient_suite() -> Result<Vec<SuiteCase>> {
    cases()?
        .into_iter()
        .map(|mut c| {
            let check = finite_difference_check(&mut c.f, &c.point, DEFAULT_STEP)?;
            Ok(SuiteCase { name: c.name, check })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes() {
        for c in gradient_suite().unwrap() {
            assert!(c.passed(), "{}: {:?}", c.name, c.check);
        }
    }
}
