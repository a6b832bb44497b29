//! Latent-variable path modelling with resultants of variable groups.

pub mod data_io;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod model;
pub mod resultants;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use linalg::FactorScores;
