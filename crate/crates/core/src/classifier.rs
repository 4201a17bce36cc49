//! Softmax MLP classifier used to score generated samples.

use crate::autodiff::Graph;
use crate::data::batch_indices;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};
use crate::params::{AdamConfig, ParamStore};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

pub struct Classifier {
    pub net: Mlp,
    pub params: ParamStore,
}

impl Classifier {
    pub fn new(input: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let net = Mlp::new("classifier", input, hidden, classes, Activation::Relu);
        let mut params = ParamStore::new();
        net.init(
            &mut params,
            &mut SplitRng::derive_labeled(seed, "classifier"),
        )?;
        Ok(Self { net, params })
    }

    /// Cross-entropy training on one-hot (or soft) targets.
    pub fn fit(
        &mut self,
        x: &Tensor,
        y: &Tensor,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        seed: u64,
    ) -> Result<()> {
        if x.rows() != y.rows() {
            return Err(Error::contract("inputs and targets differ in length"));
        }
        let adam = AdamConfig::with_lr(lr);
        for epoch in 0..epochs {
            let shuffle = SplitRng::derive(seed, epoch as u64).next_seed();
            for idx in batch_indices(x.rows(), batch_size, Some(shuffle))? {
                let mut g = Graph::new();
                let xi = g.input("x", x.gather_rows(&idx)?);
                let yi = g.input("y", y.gather_rows(&idx)?);
                let logits = self.net.forward(&mut g, &self.params, xi)?;
                let ls = g.log_softmax(logits)?;
                let prod = g.mul(yi, ls)?;
                let s = g.sum_last(prod)?;
                let m = g.mean(s, None)?;
                let loss = g.neg(m)?;
                let grads = g.backward(loss)?;
                self.params.adam_step(grads.params(), &adam)?;
            }
        }
        Ok(())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.net.eval(&self.params, x)?.argmax_rows())
    }

    /// Fraction of rows whose prediction matches `labels`.
    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(
            p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64
                / labels.len().max(1) as f64,
        )
    }
}
