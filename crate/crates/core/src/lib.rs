//! Multilingual and multimodal neural topic modelling over precomputed
//! embeddings, with a polylingual Gibbs baseline and retrieval/coherence
//! evaluation.
//!
//! The numerical core is generic over the scalar type; the aliases below
//! fix it to `f64`, which is what training and the command-line tool use.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fsio;
pub mod model;
pub mod numkit;
pub mod optim;
pub mod pltm;
pub mod trainer;

pub use config::RunConfig;
pub use error::{Error, Result};

pub type Matrix = numkit::Matrix<f64>;
pub type TupleDataset = corpus::TupleDataset<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type ModelConfig = model::ModelConfig<f64>;
pub type LossBreakdown = model::LossBreakdown<f64>;
pub type TrainConfig = trainer::TrainConfig<f64>;
pub type TrainHistory = trainer::TrainHistory<f64>;
pub type ModelBundle = trainer::ModelBundle<f64>;
