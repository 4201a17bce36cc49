//! Multimodal latent-variable models, the environments they are evaluated
//! on, and the reinforcement-learning agents that consume their latents.

pub mod autodiff;
pub mod classifier;
pub mod config;
pub mod data;
pub mod error;
pub mod gaussian;
pub mod gradcheck;
pub mod likelihood;
pub mod model;
pub mod nn;
pub mod params;
pub mod presets;
pub mod raster;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
