//! Importance-weighted log-likelihood bounds and cross-modal coherence.
//!
//! Every estimator is the standard lower bound
//! `log (1/N) Σ_n p(x, zₙ) / q(zₙ | ·)` with `zₙ ~ q`, computed per datum
//! with a generator derived from `(seed, datum index)` and averaged.

use std::fmt::Write as _;

use crate::autodiff::logsumexp_slice;
use crate::data::MultimodalDataset;
use crate::error::{Error, Result};
use crate::gaussian::{log_standard_normal, DiagGaussian};
use crate::model::outputs::{log_likelihood_rows, mean_output};
use crate::model::{CodeMode, Likelihood, MuseModel, Variant};
use crate::raster;
use crate::rng::SplitRng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct IwEstimate {
    /// Mean bound in nats per datum.
    pub value: f64,
    pub stderr: f64,
    pub num_samples: usize,
    pub count: usize,
}

impl IwEstimate {
    pub fn from_per_datum(values: &[f64], num_samples: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("no data to estimate over"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                node: "importance-weighted estimate".into(),
            });
        }
        Ok(Self {
            value: mean,
            stderr: (var / n).sqrt(),
            num_samples,
            count: values.len(),
        })
    }
}

/// `logsumexp(w) − log N`.
pub fn iw_from_log_weights(log_weights: &[f64]) -> f64 {
    logsumexp_slice(log_weights) - (log_weights.len() as f64).ln()
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::contract("need at least one importance sample"))
    } else {
        Ok(())
    }
}

/// Draw `n` samples from `q`, returning them as `[n, d]` and their log-densities.
fn draw(q: &DiagGaussian, n: usize, rng: &mut SplitRng) -> Result<(Tensor, Vec<f64>)> {
    let d = q.dim();
    let mut z = Vec::with_capacity(n * d);
    let mut logq = Vec::with_capacity(n);
    for _ in 0..n {
        let s = q.sample(rng);
        logq.push(q.log_pdf(&s)?);
        z.extend(s);
    }
    Ok((Tensor::new(vec![n, d], z)?, logq))
}

/// Single-datum bound given a proposal and `log p(x, z)` over a batch of `z`.
pub fn iw_bound<F>(q: &DiagGaussian, n: usize, rng: &mut SplitRng, log_joint: F) -> Result<f64>
where
    F: FnOnce(&Tensor) -> Result<Vec<f64>>,
{
    check_n(n)?;
    let (z, logq) = draw(q, n, rng)?;
    let lj = log_joint(&z)?;
    let w: Vec<f64> = lj.iter().zip(&logq).map(|(a, b)| a - b).collect();
    Ok(iw_from_log_weights(&w))
}

/// A model with one continuous latent, enough to estimate `log p(x)`.
pub trait LatentModel {
    /// Proposal `q(z | x)`.
    fn proposal(&self, x: &[f64]) -> Result<DiagGaussian>;
    /// `log p(x | zₙ)` for each row of `z`.
    fn log_likelihood(&self, x: &[f64], z: &Tensor) -> Result<Vec<f64>>;
}

/// Bound on `log p(x)` for one datum under a standard-normal prior.
pub fn iw_log_evidence<M: LatentModel + ?Sized>(
    model: &M,
    x: &[f64],
    n: usize,
    rng: &mut SplitRng,
) -> Result<f64> {
    let q = model.proposal(x)?;
    iw_bound(&q, n, rng, |z| {
        let ll = model.log_likelihood(x, z)?;
        Ok((0..z.rows())
            .map(|i| ll[i] + log_standard_normal(z.row(i)))
            .collect())
    })
}

/// Mean bound over the rows of `xs`.
pub fn iw_marginal_generic<M: LatentModel + ?Sized>(
    model: &M,
    xs: &Tensor,
    n: usize,
    seed: u64,
) -> Result<IwEstimate> {
    check_n(n)?;
    let per: Vec<f64> = (0..xs.rows())
        .map(|i| iw_log_evidence(model, xs.row(i), n, &mut SplitRng::derive(seed, i as u64)))
        .collect::<Result<_>>()?;
    IwEstimate::from_per_datum(&per, n)
}

/// `z ~ N(0, 1)`, `x | z ~ N(a z + b, s²)`, with a deliberately imperfect
/// Gaussian proposal (the exact posterior shifted and widened).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearGaussianToy {
    pub a: f64,
    pub b: f64,
    pub s: f64,
    pub proposal_shift: f64,
    pub proposal_log_widen: f64,
}

impl LinearGaussianToy {
    pub fn log_evidence(&self, x: f64) -> f64 {
        let var = self.a * self.a + self.s * self.s;
        -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - self.b).powi(2) / (2.0 * var)
    }

    pub fn exact_posterior(&self, x: f64) -> DiagGaussian {
        let s2 = self.s * self.s;
        let var = 1.0 / (1.0 + self.a * self.a / s2);
        let mean = var * self.a * (x - self.b) / s2;
        DiagGaussian {
            mean: vec![mean],
            logvar: vec![var.ln()],
        }
    }
}

impl LatentModel for LinearGaussianToy {
    fn proposal(&self, x: &[f64]) -> Result<DiagGaussian> {
        let mut q = self.exact_posterior(x[0]);
        q.mean[0] += self.proposal_shift;
        q.logvar[0] += self.proposal_log_widen;
        Ok(q)
    }

    fn log_likelihood(&self, x: &[f64], z: &Tensor) -> Result<Vec<f64>> {
        let lv = 2.0 * self.s.ln();
        let obs = |zi: f64| DiagGaussian {
            mean: vec![self.a * zi + self.b],
            logvar: vec![lv],
        };
        (0..z.rows()).map(|i| obs(z.row(i)[0]).log_pdf(x)).collect()
    }
}

/// Modality `m`'s own VAE inside a two-level model.
pub struct BottomVae<'a> {
    pub model: &'a MuseModel,
    pub m: usize,
}

impl LatentModel for BottomVae<'_> {
    fn proposal(&self, x: &[f64]) -> Result<DiagGaussian> {
        let xt = Tensor::new(vec![1, x.len()], x.to_vec())?;
        Ok(self.model.encode_modality(self.m, &xt)?.row(0))
    }

    fn log_likelihood(&self, x: &[f64], z: &Tensor) -> Result<Vec<f64>> {
        let out = self.model.decode_code(self.m, z)?;
        let lik = self.model.spec.modalities[self.m].likelihood;
        log_likelihood_rows(lik, &out, &repeat_row(x, z.rows())?)
    }
}

fn repeat_row(x: &[f64], n: usize) -> Result<Tensor> {
    let mut d = Vec::with_capacity(n * x.len());
    for _ in 0..n {
        d.extend_from_slice(x);
    }
    Tensor::new(vec![n, x.len()], d)
}

fn row_tensor(t: &Tensor, i: usize) -> Tensor {
    Tensor::new(vec![1, t.row_len()], t.row(i).to_vec()).expect("non-empty row")
}

/// `log p(x_m)` through modality `m`'s own VAE (two-level variants only).
pub fn iw_marginal(
    model: &MuseModel,
    m: usize,
    data: &MultimodalDataset,
    n: usize,
    seed: u64,
) -> Result<IwEstimate> {
    if !model.variant().is_hierarchical() {
        return Err(Error::contract(format!(
            "marginal bound needs a modality-specific latent; {} has none",
            model.variant()
        )));
    }
    iw_marginal_generic(&BottomVae { model, m }, &data.modalities[m], n, seed)
}

/// Joint bound. Two-level variants score the deterministic codes under the
/// top level (unit-variance Gaussian code likelihood); the others score
/// the data directly.
pub fn iw_joint(
    model: &MuseModel,
    data: &MultimodalDataset,
    n: usize,
    seed: u64,
) -> Result<IwEstimate> {
    check_n(n)?;
    let m_count = model.num_modalities();
    let mut per = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let xs: Vec<Tensor> = data.modalities.iter().map(|t| row_tensor(t, i)).collect();
        let refs: Vec<Option<&Tensor>> = xs.iter().map(Some).collect();
        let q = model.encode_multimodal(&refs, 1)?.row(0);
        let mut rng = SplitRng::derive(seed, i as u64);
        let v = if model.variant().is_hierarchical() {
            let codes: Vec<Tensor> = (0..m_count)
                .map(|m| model.code_of(m, &xs[m], CodeMode::Deterministic))
                .collect::<Result<_>>()?;
            iw_bound(&q, n, &mut rng, |z| {
                let mut lj: Vec<f64> = (0..z.rows())
                    .map(|r| log_standard_normal(z.row(r)))
                    .collect();
                for (m, c) in codes.iter().enumerate() {
                    let chat = model.decode_top(m, z)?;
                    let ll = log_likelihood_rows(
                        Likelihood::Gaussian,
                        &chat,
                        &repeat_row(c.row(0), z.rows())?,
                    )?;
                    lj.iter_mut().zip(ll).for_each(|(a, b)| *a += b);
                }
                Ok(lj)
            })?
        } else {
            iw_bound(&q, n, &mut rng, |z| {
                let mut lj: Vec<f64> = (0..z.rows())
                    .map(|r| log_standard_normal(z.row(r)))
                    .collect();
                for (m, x) in xs.iter().enumerate() {
                    let out = model.decode_to_data(m, z)?;
                    let lik = model.spec.modalities[m].likelihood;
                    let ll = log_likelihood_rows(lik, &out, &repeat_row(x.row(0), z.rows())?)?;
                    lj.iter_mut().zip(ll).for_each(|(a, b)| *a += b);
                }
                Ok(lj)
            })?
        };
        per.push(v);
    }
    IwEstimate::from_per_datum(&per, n)
}

/// Bound on `log p(x_target | x_sources)` with the sources' posterior as
/// proposal, decoding deterministically through every level.
pub fn iw_conditional(
    model: &MuseModel,
    target: usize,
    sources: &[usize],
    data: &MultimodalDataset,
    n: usize,
    seed: u64,
) -> Result<IwEstimate> {
    check_n(n)?;
    if sources.is_empty() {
        return Err(Error::contract(
            "conditional bound needs at least one source modality",
        ));
    }
    if target >= model.num_modalities() || sources.iter().any(|&s| s >= model.num_modalities()) {
        return Err(Error::contract("modality index out of range"));
    }
    let lik = model.spec.modalities[target].likelihood;
    let mut per = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let xs: Vec<Tensor> = data.modalities.iter().map(|t| row_tensor(t, i)).collect();
        let refs: Vec<Option<&Tensor>> = (0..model.num_modalities())
            .map(|m| sources.contains(&m).then_some(&xs[m]))
            .collect();
        let q = model.encode_multimodal(&refs, 1)?.row(0);
        let x = xs[target].row(0);
        let v = iw_bound(&q, n, &mut SplitRng::derive(seed, i as u64), |z| {
            let out = model.decode_to_data(target, z)?;
            let ll = log_likelihood_rows(lik, &out, &repeat_row(x, z.rows())?)?;
            Ok((0..z.rows())
                .map(|r| ll[r] + log_standard_normal(z.row(r)))
                .collect())
        })?;
        per.push(v);
    }
    IwEstimate::from_per_datum(&per, n)
}

/// Generate `target` from `sources` for the whole dataset in chunks.
pub fn generate_all(
    model: &MuseModel,
    sources: &[usize],
    target: usize,
    data: &MultimodalDataset,
) -> Result<Tensor> {
    const CHUNK: usize = 256;
    let mut rows = Vec::new();
    let mut start = 0;
    while start < data.len() {
        let idx: Vec<usize> = (start..(start + CHUNK).min(data.len())).collect();
        let batch = data.gather(&idx)?;
        let refs: Vec<Option<&Tensor>> = (0..model.num_modalities())
            .map(|m| sources.contains(&m).then_some(&batch[m]))
            .collect();
        let out = model.cross_modal_generate(&refs, target, crate::model::LatentMode::Mean)?;
        rows.extend_from_slice(out.data());
        start += CHUNK;
    }
    Tensor::new(
        vec![data.len(), model.spec.modalities[target].data_dim],
        rows,
    )
}

/// Fraction of generated categorical samples whose argmax is the true class.
pub fn coherence_accuracy(
    model: &MuseModel,
    sources: &[usize],
    target: usize,
    data: &MultimodalDataset,
) -> Result<f64> {
    if model.spec.modalities.get(target).map(|s| s.likelihood) != Some(Likelihood::Categorical) {
        return Err(Error::contract(
            "coherence accuracy needs a categorical target",
        ));
    }
    if sources.is_empty() {
        return Err(Error::contract("coherence needs at least one source"));
    }
    let gen = generate_all(model, sources, target, data)?;
    let truth = data.modalities[target].argmax_rows();
    let hits = gen
        .argmax_rows()
        .iter()
        .zip(&truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Fraction of generated bar images whose orientation is within `tol`
/// radians of the true angle. Needs `data.factors` to hold the angles.
pub fn orientation_accuracy(
    model: &MuseModel,
    sources: &[usize],
    image: usize,
    data: &MultimodalDataset,
    tol: f64,
) -> Result<f64> {
    let angles = data
        .factors
        .as_ref()
        .ok_or_else(|| Error::contract("dataset carries no angles"))?;
    let side = (model.spec.modalities[image].data_dim as f64).sqrt() as usize;
    if side * side != model.spec.modalities[image].data_dim {
        return Err(Error::contract("image modality is not square"));
    }
    let gen = generate_all(model, sources, image, data)?;
    let hits = (0..data.len())
        .filter(|&i| {
            raster::orientation(gen.row(i), side)
                .is_some_and(|a| raster::orientation_gap(a, angles[i]) <= tol)
        })
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// One row of the metrics CSV: `metric,modality,N,value,stderr,seed`.
pub fn csv_row(out: &mut String, metric: &str, modality: &str, est: &IwEstimate, seed: u64) {
    let _ = writeln!(
        out,
        "{metric},{modality},{},{},{},{seed}",
        est.num_samples, est.value, est.stderr
    );
}

pub const CSV_HEADER: &str = "metric,modality,N,value,stderr,seed\n";

/// Mean expected observation for a prior sample, used by generation tooling.
pub fn prior_generate(model: &MuseModel, target: usize, count: usize, seed: u64) -> Result<Tensor> {
    let mut rng = SplitRng::new(seed);
    let z = Tensor::new(
        vec![count, model.spec.top_latent_dim],
        rng.normals(count * model.spec.top_latent_dim),
    )?;
    let out = model.decode_to_data(target, &z)?;
    Ok(mean_output(model.spec.modalities[target].likelihood, &out))
}

/// Whether the variant supports the marginal bound.
pub fn has_marginal(v: Variant) -> bool {
    v.is_hierarchical()
}
