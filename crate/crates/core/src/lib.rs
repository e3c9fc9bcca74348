//! Texture featurization of microstructure images with a VGG16-style
//! convolutional stack, random forest classification, repeated
//! cross-validation and filter visualization.
//!
//! The crate is `no_std` and only needs an allocator. File formats, image
//! decoding, parallel orchestration and the command line live in the
//! `microtex` crate.

#![no_std]

extern crate alloc;

pub mod cnn;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod forest;
pub mod image;
pub mod kmeans;
pub mod rng;
pub mod tensor;
pub mod viz;

pub use cnn::{Network, PixelNormalization, PreprocessedImage, TapPoint, VggConfig, WeightStore};
pub use error::{Error, Result};
pub use image::Image;
pub use tensor::{ConvKernel, FeatureMap, Scalar};
