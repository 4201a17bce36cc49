//! Observation likelihoods over decoder outputs.
//!
//! Decoders emit logits for Bernoulli and categorical modalities and the
//! mean for unit-variance Gaussian ones.

use super::spec::Likelihood;
use crate::autodiff::{logsumexp_slice, Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-row negative log-likelihood used for training, shape `[B]`. The
/// Gaussian normalizing constant is dropped.
pub fn nll_nodes(g: &mut Graph, lik: Likelihood, out: NodeId, x: NodeId) -> Result<NodeId> {
    match lik {
        Likelihood::Bernoulli => {
            // softplus(l) - x·l is the cross-entropy of sigmoid(l) against x
            let sp = g.softplus(out)?;
            let xl = g.mul(x, out)?;
            let d = g.sub(sp, xl)?;
            g.sum_last(d)
        }
        Likelihood::Categorical => {
            let ls = g.log_softmax(out)?;
            let xl = g.mul(x, ls)?;
            let s = g.sum_last(xl)?;
            g.neg(s)
        }
        Likelihood::Gaussian => {
            let d = g.sub(out, x)?;
            let d2 = g.square(d)?;
            let s = g.sum_last(d2)?;
            g.scale(s, 0.5)
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Exact `log p(x | out)` of one row.
pub fn log_likelihood_row(lik: Likelihood, out: &[f64], x: &[f64]) -> f64 {
    match lik {
        Likelihood::Bernoulli => out.iter().zip(x).map(|(l, xi)| xi * l - softplus(*l)).sum(),
        Likelihood::Categorical => {
            let lse = logsumexp_slice(out);
            out.iter().zip(x).map(|(l, xi)| xi * (l - lse)).sum()
        }
        Likelihood::Gaussian => out
            .iter()
            .zip(x)
            .map(|(m, xi)| -HALF_LN_2PI - 0.5 * (xi - m) * (xi - m))
            .sum(),
    }
}

pub fn log_likelihood_rows(lik: Likelihood, out: &Tensor, x: &Tensor) -> Result<Vec<f64>> {
    if out.shape() != x.shape() {
        return Err(Error::contract(format!(
            "decoder output {:?} does not match data {:?}",
            out.shape(),
            x.shape()
        )));
    }
    Ok((0..out.rows())
        .map(|i| log_likelihood_row(lik, out.row(i), x.row(i)))
        .collect())
}

/// Expected observation: probabilities, class probabilities, or the mean.
pub fn mean_output(lik: Likelihood, out: &Tensor) -> Tensor {
    match lik {
        Likelihood::Bernoulli => out.map(|l| 1.0 / (1.0 + (-l).exp())),
        Likelihood::Categorical => {
            let mut t = out.clone();
            let w = t.row_len();
            for row in t.data_mut().chunks_mut(w) {
                let lse = logsumexp_slice(row);
                row.iter_mut().for_each(|v| *v = (*v - lse).exp());
            }
            t
        }
        Likelihood::Gaussian => out.clone(),
    }
}
