//! Conditional adversarial image-to-image networks for infrared
//! segmentation, occlusion reconstruction and visual-to-thermal analysis,
//! with the classical baselines they are measured against.
//!
//! Everything runs on the CPU in `f32`, deterministically under a seed.
//! Enable the default `parallel` feature to spread convolution, evaluation
//! and registration loops over a rayon pool; results are bit-identical with
//! and without it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod baselines;
pub mod config;
pub mod error;
pub mod gradsuite;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod pnm;
pub mod protocols;
pub mod tensor;
pub mod thermal;

pub use error::{Error, Result};
pub use image::{ImageBuffer, Mask, Rect};
pub use tensor::{Graph, Scalar, Tensor, Var};
