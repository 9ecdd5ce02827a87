//! U-Net generator, patch discriminator, adversarial objectives, training,
//! checkpoints and inference.

mod checkpoint;
mod discriminator;
mod generator;
mod infer;
mod layer;
mod noise;
mod objective;
mod spec;
mod train;

pub use checkpoint::{Checkpoint, NamedTensor, OptimizerHeader, MAGIC as CHECKPOINT_MAGIC};
pub use discriminator::PatchDiscriminator;
pub use generator::{GeneratorPass, UNetGenerator};
pub use infer::{activation_grid, dump_latent_activations, infer, segment, segment_batch};
pub use layer::{Layer, LayerKind, Mode, Module, Norm, INIT_STD};
pub use noise::NoiseSource;
pub use objective::{
    discriminator_loss, generator_input, generator_loss, objective_terms, stack, value_function, GenLoss, ObjectiveTerms, Variant,
};
pub use spec::{parse_skips, NetSpec, NoiseMode};
pub use train::{split_validation, train, train_with_validation, EpochMetrics, TrainConfig, TrainOutcome, TrainState, METRICS_HEADER};
