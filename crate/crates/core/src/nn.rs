//! Dense multilayer perceptrons stored in a [`ParamStore`].
//!
//! Layer `i` of a network with prefix `p` owns `p/l{i}/w` (`[in, out]`) and
//! `p/l{i}/b` (`[out]`). The hidden activation is applied after every layer
//! except the last, which is linear.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::rng::SplitRng;
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Swish,
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Swish => g.swish(x),
            Activation::Tanh => g.tanh(x),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Swish => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Swish => "swish",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "swish" => Ok(Activation::Swish),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(
                "activation",
                format!("unknown activation `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub prefix: String,
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(
        prefix: impl Into<String>,
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
    ) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self {
            prefix: prefix.into(),
            sizes,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}/l{layer}/w", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}/l{layer}/b", self.prefix)
    }

    /// Uniform `±1/√fan_in` weights and biases.
    pub fn init(&self, store: &mut ParamStore, rng: &mut SplitRng) -> Result<()> {
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let bound = 1.0 / (i as f64).sqrt();
            let w: Vec<f64> = (0..i * o)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect();
            let b: Vec<f64> = (0..o).map(|_| rng.uniform_range(-bound, bound)).collect();
            store.insert(self.weight_name(l), Tensor::new(vec![i, o], w)?)?;
            store.insert(self.bias_name(l), Tensor::vector(b))?;
        }
        Ok(())
    }

    /// Zero the output layer, so the network emits zeros for any input.
    pub fn zero_output_layer(&self, store: &mut ParamStore) -> Result<()> {
        let l = self.layers() - 1;
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        store.set_value(&self.weight_name(l), Tensor::zeros(&[i, o]))?;
        store.set_value(&self.bias_name(l), Tensor::zeros(&[o]))
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for l in 0..self.layers() {
            let w = g.param(&self.weight_name(l), store.value(&self.weight_name(l))?);
            let b = g.param(&self.bias_name(l), store.value(&self.bias_name(l))?);
            let a = g.matmul(h, w)?;
            h = g.add_bias(a, b)?;
            if l + 1 < self.layers() {
                h = self.activation.apply(g, h)?;
            }
        }
        Ok(h)
    }

    /// Forward pass on plain tensors, without recording a graph.
    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::shape(
                self.prefix.clone(),
                format!("expected [B, {}], got {:?}", self.input_dim(), x.shape()),
            ));
        }
        let rows = x.shape()[0];
        let mut h = x.data().to_vec();
        for l in 0..self.layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = store.value(&self.weight_name(l))?;
            let b = store.value(&self.bias_name(l))?;
            let mut out = vec![0.0; rows * o];
            gemm(rows, i, o, &h, false, w.data(), false, &mut out);
            let last = l + 1 == self.layers();
            for row in out.chunks_mut(o) {
                for (v, bb) in row.iter_mut().zip(b.data()) {
                    *v += bb;
                    if !last {
                        *v = self.activation.eval(*v);
                    }
                }
            }
            h = out;
        }
        Tensor::new(vec![rows, self.output_dim()], h)
    }
}
