//! Time-series classification with a learned Gaussian data augmentation and
//! normalized expected-signature features.

pub mod augment;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod expected;
pub mod model;
pub mod normalization;
pub mod seeds;
pub mod signature;
pub mod tensor;

pub use datasets::Dataset;
pub use error::{Error, Result};
pub use normalization::NormConfig;
pub use signature::TimeSeries;
pub use tensor::TruncTensor;
