//! Domain-similarity transfer planning and attention-guided augmentation for
//! fine-grained image classification, at desk scale.
//!
//! * [`domain`]: Earth Mover's Distance between class-centroid profiles, an
//!   exact transportation solver, source ranking and category selection.
//! * [`model`]: a small convolutional backbone with attention maps, bilinear
//!   attention pooling and two-pass (full image + zoom) prediction.
//! * [`augment`]: attention cropping and dropping.
//! * [`trainer`]: three-stream training with the attention regularization
//!   loss and moving-average part centers.
//! * [`dataset`]: PPM datasets and a synthetic fine-grained generator.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod augment;
pub mod cli;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod netpbm;
pub mod ops;
pub mod report;
pub mod rng;
pub mod tdf;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
