//! Synthetic dataset generation, registration, feature-crop enhancement and
//! occlusion synthesis.

mod affine;
mod composite;
mod occlusion;
mod register;
mod synth;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub use affine::{apply_affine, apply_affine_mask, apply_affine_to, AffineTransform, Interp};
pub use composite::{feature_crop_enhance, superimpose, superimpose_sequence, SyntheticTarget, FILL_BAND, SUPPORT_THRESHOLD};
pub use occlusion::{
    overlay_reconstruction, synthesize_occlusion, OccluderFill, OccluderShape, OccluderSpec, OverlayMode, MAX_OCCLUSION, MIN_OCCLUSION,
};
pub use register::{estimate_affine, register, Registration, MAX_ANGLE_DEG, MAX_SCALE, MAX_SHIFT, MIN_PEAK, MIN_SCALE};
pub use synth::{
    background, read_manifest, rotor_template, synthesize_dataset, write_dataset, Background, SynthConfig, TargetMode, MANIFEST_HEADER,
};
/// An input image and its target (image or mask) of equal size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairedSample {
    pub x: ImageBuffer,
    pub y: ImageBuffer,
    pub id: String,
}

impl PairedSample {
    pub fn new(x: ImageBuffer, y: ImageBuffer, id: impl Into<String>) -> Result<Self> {
        if !x.same_size(&y) {
            return Err(Error::invalid(format!(
                "paired images differ in size: {}×{} vs {}×{}",
                x.width(),
                x.height(),
                y.width(),
                y.height()
            )));
        }
        Ok(PairedSample { x, y, id: id.into() })
    }
}
