//! Benchmark harness for galaxy-morphology CNNs trained on volunteer vote
//! counts with a Dirichlet-Multinomial likelihood.

pub mod bench;
pub mod catalog;
pub mod data;
pub mod dirichlet;
pub mod error;
pub mod eval;
pub mod image;
pub mod nn;
pub mod scalar;
pub mod schema;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single precision is what training and checkpoints use.
pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Params32 = nn::ParameterSet<f32>;
pub type Params64 = nn::ParameterSet<f64>;
pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type Prediction32 = eval::PredictionRecord<f32>;
pub type Prediction64 = eval::PredictionRecord<f64>;
pub type Concentrations32 = dirichlet::ConcentrationVector<f32>;
pub type Concentrations64 = dirichlet::ConcentrationVector<f64>;
