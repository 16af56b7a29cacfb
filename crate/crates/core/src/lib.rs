//! Landslide mapping from SAR and optical composites.
//!
//! The pipeline builds 3-band composites from co-registered rasters
//! ([`raster`]), cuts labeled 25x25 patches from annotation polygons
//! ([`sampling`]), trains a small CNN written from scratch ([`nn`],
//! [`training`]) and scans whole scenes with a sliding window
//! ([`detection`]). [`synth`] generates scenes with known ground truth.
//!
//! The network engine is generic over [`Scalar`]; the aliases below fix it to
//! `f32`, which is what the pipeline runs in.

pub mod detection;
pub mod error;
pub mod nn;
pub mod raster;
pub mod sampling;
mod scalar;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = nn::Tensor4<f32>;
pub type Model = nn::Model<f32>;
pub type AdamState = nn::AdamState<f32>;
