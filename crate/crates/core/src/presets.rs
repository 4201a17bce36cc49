//! Desk-scale model and training presets.

use crate::data::{bars, mnist};
use crate::error::Result;
use crate::model::{Likelihood, ModalitySpec, ModelSpec, TrainConfig, Variant};
use crate::nn::Activation;

pub const BARS_IMAGE_SIZE: usize = 16;
pub const BARS_NOISE_SD: f64 = 0.05;
pub const BARS_TRAIN: usize = 2000;
pub const BARS_TEST: usize = 500;

/// Image and angle-code modalities of the bars dataset.
pub fn bars_spec(variant: Variant) -> Result<ModelSpec> {
    let side = BARS_IMAGE_SIZE;
    let image = ModalitySpec::new(bars::IMAGE, side * side, Likelihood::Bernoulli, 16)
        .with_hidden(vec![128, 128], Activation::Swish);
    let angle = ModalitySpec::new(bars::ANGLE, 2, Likelihood::Gaussian, 4)
        .with_weights(50.0, 1.0, 10.0)
        .with_hidden(vec![128, 128], Activation::Swish);
    ModelSpec::build(variant, vec![image, angle], 8)
}

pub fn bars_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 20,
        batch_size: 64,
        learning_rate: 1e-3,
        seed,
        shuffle: true,
    }
}

pub const MNIST_TRAIN: usize = 9000;

/// 784-pixel Bernoulli image and 10-way label, 512-wide image networks.
pub fn mnist_spec(variant: Variant) -> Result<ModelSpec> {
    let image = ModalitySpec::new(mnist::IMAGE, 784, Likelihood::Bernoulli, 64)
        .with_weights(1.0, 1.0, 2.0)
        .with_hidden(vec![512, 512], Activation::Swish);
    let label = ModalitySpec::new(mnist::LABEL, mnist::CLASSES, Likelihood::Categorical, 16)
        .with_weights(50.0, 1.0, 10.0)
        .with_hidden(vec![128, 128], Activation::Swish);
    ModelSpec::build(variant, vec![image, label], 32)
}

pub fn mnist_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 30,
        batch_size: 64,
        learning_rate: 1e-3,
        seed,
        shuffle: true,
    }
}
