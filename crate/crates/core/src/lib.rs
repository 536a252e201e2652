//! Laboratory for neural-collapse emergence in small dense classifiers.
//!
//! Training code is generic over [`numcore::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the command-line tool.

pub mod dataio;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod ncmetrics;
pub mod numcore;
pub mod optim;
pub mod persist;
pub mod protocol;
pub mod special;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};

pub type Matrix = numcore::Matrix<f64>;
pub type Matrix32 = numcore::Matrix<f32>;
pub type MlpModel = model::Mlp<f64>;
pub type MlpModel32 = model::Mlp<f32>;
pub type Dataset = dataio::Dataset<f64>;
pub type Dataset32 = dataio::Dataset<f32>;
