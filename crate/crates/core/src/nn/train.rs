use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::discriminator::PatchDiscriminator;
use super::generator::UNetGenerator;
use super::layer::{Mode, Module};
use super::noise::NoiseSource;
use super::objective::{discriminator_loss, generator_input, generator_loss, stack, GenLoss, Variant};
use super::spec::NetSpec;
use crate::augment::PairedSample;
use crate::error::{Error, Result};
use crate::metrics::l1_validation;
use crate::tensor::{Adam, AdamConfig, Graph};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_l1: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub validation_fraction: f64,
    pub variant: Variant,
    pub gen_loss: GenLoss,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 1,
            lambda_l1: 100.0,
            seed: 0,
            checkpoint_every: 50,
            validation_fraction: 0.2,
            variant: Variant::Conditional,
            gen_loss: GenLoss::NonSaturating,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("batch_size and checkpoint_every must be positive".into()));
        }
        if !(self.lambda_l1 >= 0.0) || !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("lambda_l1 must be ≥ 0 and validation_fraction in [0, 1)".into()));
        }
        self.adam.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Networks and optimizers of one training run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub generator: UNetGenerator<f32>,
    pub discriminator: PatchDiscriminator<f32>,
    pub opt_g: Adam<f32>,
    pub opt_d: Adam<f32>,
    /// Epochs of training these weights have seen.
    pub epoch: usize,
}

impl TrainState {
    pub fn new(spec: &NetSpec, cfg: &TrainConfig) -> Result<Self> {
        let generator = UNetGenerator::new(spec, cfg.seed)?;
        let discriminator = PatchDiscriminator::new(spec, cfg.variant.conditions_discriminator(), cfg.seed.wrapping_add(1))?;
        let opt_g = Adam::new(cfg.adam, generator.params());
        let opt_d = Adam::new(cfg.adam, discriminator.params());
        Ok(TrainState { generator, discriminator, opt_g, opt_d, epoch: 0 })
    }

    pub fn spec(&self) -> &NetSpec {
        self.generator.spec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub val_l1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Validation L1 of the weights before the first update.
    pub initial_val_l1: f64,
    /// Initial, periodic and final checkpoints in epoch order.
    pub checkpoints: Vec<Checkpoint>,
    /// Lowest validation L1 seen, earliest epoch on ties.
    pub best: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

pub const METRICS_HEADER: &str = "epoch,d_loss,g_loss,val_l1";

impl TrainOutcome {
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for m in &self.metrics {
            out.push_str(&format!("{},{},{},{}\n", m.epoch, m.d_loss, m.g_loss, m.val_l1));
        }
        out
    }
}

/// Splits off the last `fraction` of `dataset` (at least one sample when
/// the fraction is positive and two or more samples exist) for validation.
pub fn split_validation(dataset: &[PairedSample], fraction: f64) -> (&[PairedSample], &[PairedSample]) {
    let n = dataset.len();
    let mut k = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        k = k.clamp(1, n - 1);
    }
    dataset.split_at(n - k.min(n))
}

/// Builds fresh networks, splits `dataset` and trains.
pub fn train(spec: &NetSpec, dataset: &[PairedSample], cfg: &TrainConfig) -> Result<(TrainState, TrainOutcome)> {
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut state = TrainState::new(spec, cfg)?;
    let (tr, val) = split_validation(dataset, cfg.validation_fraction);
    let outcome = train_with_validation(&mut state, tr, val, cfg)?;
    Ok((state, outcome))
}

/// Alternating optimisation: per minibatch one discriminator step on a
/// real and a generated batch, then one generator step. Validation L1 is
/// scored after every epoch; an empty validation set falls back to the
/// training set.
pub fn train_with_validation(
    state: &mut TrainState,
    train_set: &[PairedSample],
    validation: &[PairedSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if state.discriminator.conditioned() != cfg.variant.conditions_discriminator() {
        return Err(Error::Config(format!("discriminator conditioning does not match variant {}", cfg.variant)));
    }
    let validation = if validation.is_empty() { train_set } else { validation };
    let spec = state.spec().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise = NoiseSource::new(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, spec.noise);

    let initial_val_l1 = l1_validation(&state.generator, validation)?;
    let initial = Checkpoint::capture(state, initial_val_l1);
    let mut best = initial.clone();
    let mut checkpoints = vec![initial];
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for local in 1..=cfg.epochs {
        state.epoch += 1;
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PairedSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (d_loss, g_loss) = step(state, &batch, &mut noise, cfg)?;
            if !d_loss.is_finite() || !g_loss.is_finite() {
                return Err(Error::Divergence { epoch: state.epoch });
            }
            d_sum += d_loss;
            g_sum += g_loss;
            steps += 1;
        }
        let val_l1 = l1_validation(&state.generator, validation)?;
        if !val_l1.is_finite() {
            return Err(Error::Divergence { epoch: state.epoch });
        }
        metrics.push(EpochMetrics { epoch: state.epoch, d_loss: d_sum / steps as f64, g_loss: g_sum / steps as f64, val_l1 });
        if val_l1 < best.val_l1 {
            best = Checkpoint::capture(state, val_l1);
        }
        if local % cfg.checkpoint_every == 0 || local == cfg.epochs {
            checkpoints.push(Checkpoint::capture(state, val_l1));
        }
    }
    Ok(TrainOutcome { initial_val_l1, checkpoints, best, metrics })
}

fn step(state: &mut TrainState, batch: &[&PairedSample], noise: &mut NoiseSource, cfg: &TrainConfig) -> Result<(f64, f64)> {
    let spec = state.generator.spec().clone();
    let (x, y) = stack::<f32>(batch, &spec)?;
    let gin = generator_input(cfg.variant, &spec, noise, x.clone())?;
    let cond = cfg.variant.conditions_discriminator();

    let mut gg = Graph::new();
    let gin = gg.leaf(&gin);
    let pass = state.generator.forward(&mut gg, gin, Mode::Train)?;
    let fake = gg.tensor(pass.output);

    // discriminator step on real and detached generated batches
    let disc = &mut state.discriminator;
    let mut gd = Graph::new();
    let yv = gd.leaf(&y);
    let xv = cond.then(|| gd.leaf(&x));
    let (real_p, bind_real) = disc.forward(&mut gd, yv, xv, Mode::Train)?;
    let fv = gd.leaf(&fake);
    let (fake_p, bind_fake) = disc.forward(&mut gd, fv, xv, Mode::Train)?;
    let d_loss = discriminator_loss(&mut gd, real_p, fake_p)?;
    let d_value = gd.scalar(d_loss)? as f64;
    gd.backward(d_loss)?;
    disc.accumulate_grads(&gd, &bind_real);
    disc.accumulate_grads(&gd, &bind_fake);
    state.opt_d.step(&mut disc.params_mut())?;
    disc.zero_grad();

    // generator step through the updated discriminator
    let xv = cond.then(|| gg.leaf(&x));
    let (p, _) = disc.forward(&mut gg, pass.output, xv, Mode::Train)?;
    let yv = gg.leaf(&y);
    let (g_loss, _, _) = generator_loss(&mut gg, p, pass.output, yv, cfg.lambda_l1, cfg.gen_loss)?;
    let g_value = gg.scalar(g_loss)? as f64;
    gg.backward(g_loss)?;
    state.generator.accumulate_grads(&gg, &pass.bindings);
    state.opt_g.step(&mut state.generator.params_mut())?;
    state.generator.zero_grad();
    Ok((d_value, g_value))
}
