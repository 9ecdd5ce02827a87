use std::fmt;
use std::str::FromStr;

use super::discriminator::PatchDiscriminator;
use super::generator::UNetGenerator;
use super::noise::NoiseSource;
use super::spec::NetSpec;
use crate::augment::PairedSample;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var, BCE_EPSILON};

/// Which adversarial objective is optimised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `G(z)` against `D(y)`; the input image is ignored.
    Unconditional,
    /// `G(z, x)` against `D(y)`.
    ConditionalGenerator,
    /// `G(z, x)` against `D(y, x)`.
    Conditional,
}

impl Variant {
    pub fn conditions_generator(self) -> bool {
        self != Variant::Unconditional
    }

    pub fn conditions_discriminator(self) -> bool {
        self == Variant::Conditional
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Unconditional => "eq1",
            Variant::ConditionalGenerator => "eq2",
            Variant::Conditional => "eq3",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq1" => Ok(Variant::Unconditional),
            "eq2" => Ok(Variant::ConditionalGenerator),
            "eq3" => Ok(Variant::Conditional),
            _ => Err(Error::Config(format!("unknown objective variant {s:?}"))),
        }
    }
}

/// Adversarial term of the generator loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GenLoss {
    /// Minimise `−log D(G(·))`.
    NonSaturating,
    /// Minimise `log(1 − D(G(·)))`, the literal min-max form.
    Saturating,
}

impl fmt::Display for GenLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenLoss::NonSaturating => "non_saturating",
            GenLoss::Saturating => "saturating",
        })
    }
}

impl FromStr for GenLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non_saturating" => Ok(GenLoss::NonSaturating),
            "saturating" => Ok(GenLoss::Saturating),
            _ => Err(Error::Config(format!("unknown generator loss {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    /// `mean log D(real) + mean log(1 − D(fake))`, the quantity the
    /// discriminator maximises.
    pub value: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub g_adversarial: f64,
    pub g_l1: f64,
}

fn clamp(p: f64) -> f64 {
    p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
}

/// `mean log D(real) + mean log(1 − D(fake))` with clamped probabilities.
pub fn value_function(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let real = d_real.iter().map(|&p| clamp(p).ln()).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / d_fake.len() as f64;
    real + fake
}

/// Stacks samples into `N × C × H × W` input and target batches in `[−1, 1]`.
pub fn stack<T: Scalar>(samples: &[&PairedSample], spec: &NetSpec) -> Result<(Tensor<T>, Tensor<T>)> {
    if samples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let s = spec.input_size;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in samples {
        for (img, ch, what) in [(&p.x, spec.in_channels, "input"), (&p.y, spec.out_channels, "target")] {
            if img.width() != s || img.height() != s || img.channels() != ch {
                return Err(Error::invalid(format!(
                    "sample {:?}: {what} is {}×{}×{}, network expects {s}×{s}×{ch}",
                    p.id,
                    img.width(),
                    img.height(),
                    img.channels()
                )));
            }
        }
        xs.extend(p.x.to_planar::<T>());
        ys.extend(p.y.to_planar::<T>());
    }
    let n = samples.len();
    Ok((Tensor::new(&[n, spec.in_channels, s, s], xs)?, Tensor::new(&[n, spec.out_channels, s, s], ys)?))
}

/// What the generator sees for input batch `x` under `variant`.
pub fn generator_input<T: Scalar>(variant: Variant, spec: &NetSpec, noise: &mut NoiseSource, x: Tensor<T>) -> Result<Tensor<T>> {
    if variant.conditions_generator() {
        noise.condition(x)
    } else {
        let s = x.shape();
        Ok(noise.draw(&[s[0], spec.generator_in_channels(), s[2], s[3]]))
    }
}

/// `bce(D(real), 1) + bce(D(fake), 0)`.
pub fn discriminator_loss<T: Scalar>(g: &mut Graph<T>, real: Var, fake: Var) -> Result<Var> {
    let ones = g.constant(g.shape(real).to_vec().as_slice(), vec![T::one(); g.value(real).len()])?;
    let zeros = g.constant(g.shape(fake).to_vec().as_slice(), vec![T::zero(); g.value(fake).len()])?;
    let lr = g.bce(real, ones)?;
    let lf = g.bce(fake, zeros)?;
    g.add(lr, lf)
}

/// Generator loss `adv + λ·L1(fake, target)`; returns `(total, adv, l1)`.
pub fn generator_loss<T: Scalar>(
    g: &mut Graph<T>,
    d_fake: Var,
    fake: Var,
    target: Var,
    lambda_l1: f64,
    form: GenLoss,
) -> Result<(Var, Var, Var)> {
    let n = g.value(d_fake).len();
    let shape = g.shape(d_fake).to_vec();
    let adv = match form {
        GenLoss::NonSaturating => {
            let ones = g.constant(&shape, vec![T::one(); n])?;
            g.bce(d_fake, ones)?
        }
        GenLoss::Saturating => {
            let zeros = g.constant(&shape, vec![T::zero(); n])?;
            let b = g.bce(d_fake, zeros)?;
            g.scale(b, -1.0)
        }
    };
    let l1 = g.l1(fake, target)?;
    let weighted = g.scale(l1, lambda_l1);
    let total = g.add(adv, weighted)?;
    Ok((total, adv, l1))
}

/// Evaluates both players' losses on a batch with the networks in eval mode.
pub fn objective_terms<T: Scalar>(
    d: &PatchDiscriminator<T>,
    gen: &UNetGenerator<T>,
    batch: &[PairedSample],
    noise: &mut NoiseSource,
    variant: Variant,
    lambda_l1: f64,
    form: GenLoss,
) -> Result<ObjectiveTerms> {
    if batch.is_empty() {
        return Err(Error::invalid("objective needs a non-empty batch"));
    }
    if d.conditioned() != variant.conditions_discriminator() {
        return Err(Error::invalid(format!(
            "variant {variant} needs a {}conditioned discriminator",
            if variant.conditions_discriminator() { "" } else { "un" }
        )));
    }
    let refs: Vec<&PairedSample> = batch.iter().collect();
    let (x, y) = stack::<T>(&refs, gen.spec())?;
    let gin = generator_input(variant, gen.spec(), noise, x.clone())?;
    let mut g = Graph::new();
    let gin = g.leaf(&gin);
    let fake = gen.forward_eval(&mut g, gin, false)?.output;
    let yv = g.leaf(&y);
    let cond = variant.conditions_discriminator().then(|| g.leaf(&x));
    let real_p = d.forward_eval(&mut g, yv, cond)?;
    let fake_p = d.forward_eval(&mut g, fake, cond)?;
    let d_loss = discriminator_loss(&mut g, real_p, fake_p)?;
    let (g_loss, adv, l1) = generator_loss(&mut g, fake_p, fake, yv, lambda_l1, form)?;
    let to64 = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    Ok(ObjectiveTerms {
        value: value_function(&to64(g.value(real_p)), &to64(g.value(fake_p))),
        d_loss: g.scalar(d_loss)?.as_f64(),
        g_loss: g.scalar(g_loss)?.as_f64(),
        g_adversarial: g.scalar(adv)?.as_f64(),
        g_l1: g.scalar(l1)?.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_value() {
        let v = value_function(&[0.5; 7], &[0.5; 3]);
        assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((v + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn optimal_discriminator_value_is_zero() {
        let v = value_function(&[1.0 - BCE_EPSILON; 4], &[BCE_EPSILON; 4]);
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn generator_adversarial_term_vanishes_when_fooling() {
        let mut g = Graph::<f64>::new();
        let d_fake = g.leaf(&Tensor::full(&[1, 1, 2, 2], 1.0 - BCE_EPSILON));
        let fake = g.leaf(&Tensor::zeros(&[1, 1, 4, 4]));
        let (_, adv, l1) = generator_loss(&mut g, d_fake, fake, fake, 100.0, GenLoss::NonSaturating).unwrap();
        assert!(g.scalar(adv).unwrap() < 1e-6);
        assert_eq!(g.scalar(l1).unwrap(), 0.0);
        let (_, sat, _) = generator_loss(&mut g, d_fake, fake, fake, 100.0, GenLoss::Saturating).unwrap();
        // log(1 − D) is driven towards −∞ (clamped)
        assert!(g.scalar(sat).unwrap() < -10.0);
    }

    #[test]
    fn variant_round_trip() {
        for v in [Variant::Unconditional, Variant::ConditionalGenerator, Variant::Conditional] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("eq4".parse::<Variant>().is_err());
    }
}
