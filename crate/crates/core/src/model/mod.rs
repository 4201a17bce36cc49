//! Hierarchical multimodal VAE, its ablations, and the baselines.
//!
//! Inputs to inference methods are per-modality slices aligned with the
//! spec's modality order; `None` marks an unavailable modality.

pub mod checkpoint;
pub mod loss;
pub mod outputs;
pub mod spec;
pub mod train;

use crate::error::{Error, Result};
use crate::gaussian::GaussianBatch;
use crate::params::ParamStore;
use crate::rng::SplitRng;
use crate::tensor::Tensor;

pub use loss::{build_loss, LossBreakdown, LossGraph};
pub use spec::{Likelihood, ModalitySpec, ModelSpec, Variant};
pub use train::{fit, TrainConfig, TrainLog};

/// How a modality-specific code is read off its posterior.
#[derive(Clone, Copy, Debug)]
pub enum CodeMode<'a> {
    Deterministic,
    /// Reparameterized with the given `[B, d]` standard-normal noise.
    Sampled(&'a Tensor),
}

/// How a multimodal latent is chosen for generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentMode {
    Mean,
    Sample(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuseModel {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

impl MuseModel {
    /// Fresh parameters. Each network draws from its own stream keyed by
    /// its name, so modality order does not affect initialization.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        for net in spec.networks() {
            net.init(
                &mut params,
                &mut SplitRng::derive_labeled(seed, &net.prefix),
            )?;
        }
        Ok(Self { spec, params })
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn num_modalities(&self) -> usize {
        self.spec.num_modalities()
    }

    fn check_input(&self, m: usize, x: &Tensor) -> Result<()> {
        let s = self
            .spec
            .modalities
            .get(m)
            .ok_or_else(|| Error::contract(format!("modality index {m} out of range")))?;
        if x.rank() != 2 || x.shape()[1] != s.data_dim {
            return Err(Error::shape(
                format!("modality `{}`", s.name),
                format!("expected [B, {}], got {:?}", s.data_dim, x.shape()),
            ));
        }
        Ok(())
    }

    fn require_hierarchical(&self, what: &str) -> Result<()> {
        if self.variant().is_hierarchical() {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "{what} needs a two-level variant, model is {}",
                self.variant()
            )))
        }
    }

    /// `q(z_m | x_m)` for a batch.
    pub fn encode_modality(&self, m: usize, x: &Tensor) -> Result<GaussianBatch> {
        self.require_hierarchical("encode_modality")?;
        self.check_input(m, x)?;
        GaussianBatch::from_head(&self.spec.bottom_encoder(m).eval(&self.params, x)?)
    }

    pub fn code_of(&self, m: usize, x: &Tensor, mode: CodeMode<'_>) -> Result<Tensor> {
        let q = self.encode_modality(m, x)?;
        match mode {
            CodeMode::Deterministic => Ok(q.mean),
            CodeMode::Sampled(noise) => {
                if noise.shape() != q.mean.shape() {
                    return Err(Error::contract(format!(
                        "noise shape {:?} does not match code shape {:?}",
                        noise.shape(),
                        q.mean.shape()
                    )));
                }
                let data = q
                    .mean
                    .data()
                    .iter()
                    .zip(q.logvar.data())
                    .zip(noise.data())
                    .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
                    .collect();
                Tensor::new(q.mean.shape().to_vec(), data)
            }
        }
    }

    /// What modality `m`'s expert reads: the deterministic code for
    /// two-level variants, the raw data otherwise.
    pub fn expert_input(&self, m: usize, x: &Tensor) -> Result<Tensor> {
        if self.variant().is_hierarchical() {
            self.code_of(m, x, CodeMode::Deterministic)
        } else {
            self.check_input(m, x)?;
            Ok(x.clone())
        }
    }

    /// `q(z_π | input_m)` for one expert.
    pub fn expert(&self, m: usize, input: &Tensor) -> Result<GaussianBatch> {
        if !self.variant().is_poe() {
            return Err(Error::contract("fusion model has no per-modality experts"));
        }
        GaussianBatch::from_head(&self.spec.expert(m).eval(&self.params, input)?)
    }

    /// Multimodal posterior from already-computed expert inputs (codes or
    /// data), prior included. Returns the posterior and the clamp count.
    pub fn posterior_from_expert_inputs(
        &self,
        inputs: &[Option<&Tensor>],
        batch: usize,
    ) -> Result<(GaussianBatch, usize)> {
        let experts: Vec<GaussianBatch> = inputs
            .iter()
            .enumerate()
            .filter_map(|(m, x)| x.map(|x| self.expert(m, x)))
            .collect::<Result<_>>()?;
        let refs: Vec<&GaussianBatch> = experts.iter().collect();
        GaussianBatch::poe(&refs, batch, self.spec.top_latent_dim)
    }

    fn check_inputs(&self, inputs: &[Option<&Tensor>], batch: usize) -> Result<()> {
        if inputs.len() != self.num_modalities() {
            return Err(Error::contract(format!(
                "{} inputs given for {} modalities",
                inputs.len(),
                self.num_modalities()
            )));
        }
        for (m, x) in inputs.iter().enumerate() {
            if let Some(x) = x {
                self.check_input(m, x)?;
                if x.rows() != batch {
                    return Err(Error::contract(format!(
                        "modality {m} has {} rows, expected {batch}",
                        x.rows()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Zero-imputed concatenation for the fusion encoder.
    fn fused_input(&self, inputs: &[Option<&Tensor>], batch: usize) -> Result<Tensor> {
        let total = self.spec.total_data_dim();
        let mut data = vec![0.0; batch * total];
        for (m, x) in inputs.iter().enumerate() {
            if let Some(x) = x {
                let off = self.spec.data_offset(m);
                let w = x.row_len();
                for i in 0..batch {
                    data[i * total + off..i * total + off + w].copy_from_slice(x.row(i));
                }
            }
        }
        Tensor::new(vec![batch, total], data)
    }

    /// Posterior over the multimodal latent given the available modalities.
    /// PoE variants combine the available experts with the prior (the prior
    /// alone when nothing is available); the fusion model zero-imputes.
    pub fn encode_multimodal(
        &self,
        inputs: &[Option<&Tensor>],
        batch: usize,
    ) -> Result<GaussianBatch> {
        self.check_inputs(inputs, batch)?;
        if !self.variant().is_poe() {
            let x = self.fused_input(inputs, batch)?;
            return GaussianBatch::from_head(&self.spec.fusion_encoder().eval(&self.params, &x)?);
        }
        let expert_inputs: Vec<Option<Tensor>> = inputs
            .iter()
            .enumerate()
            .map(|(m, x)| x.map(|x| self.expert_input(m, x)).transpose())
            .collect::<Result<_>>()?;
        let refs: Vec<Option<&Tensor>> = expert_inputs.iter().map(Option::as_ref).collect();
        Ok(self.posterior_from_expert_inputs(&refs, batch)?.0)
    }

    /// Top decoder output: reconstructed codes for two-level variants,
    /// data-space outputs for single-level ones.
    pub fn decode_top(&self, m: usize, z: &Tensor) -> Result<Tensor> {
        if !self.variant().is_poe() {
            return Err(Error::contract(
                "fusion model has no per-modality top decoder",
            ));
        }
        self.spec.top_decoder(m).eval(&self.params, z)
    }

    /// Bottom decoder output (logits or mean) from a code.
    pub fn decode_code(&self, m: usize, c: &Tensor) -> Result<Tensor> {
        self.require_hierarchical("decode_code")?;
        self.spec.bottom_decoder(m).eval(&self.params, c)
    }

    /// Data-space decoder output of modality `m` from multimodal latents,
    /// passing deterministically through both levels where there are two.
    pub fn decode_to_data(&self, m: usize, z: &Tensor) -> Result<Tensor> {
        match self.variant() {
            Variant::Muse | Variant::MuseA => {
                let c = self.decode_top(m, z)?;
                self.decode_code(m, &c)
            }
            Variant::MuseH | Variant::FlatMvae => self.decode_top(m, z),
            Variant::FusionVae => {
                let out = self.spec.fusion_decoder().eval(&self.params, z)?;
                let (off, w) = (self.spec.data_offset(m), self.spec.modalities[m].data_dim);
                let data: Vec<f64> = (0..out.rows())
                    .flat_map(|i| out.row(i)[off..off + w].to_vec())
                    .collect();
                Tensor::new(vec![out.rows(), w], data)
            }
        }
    }

    /// Expected observation of `target` given the `sources`.
    pub fn cross_modal_generate(
        &self,
        sources: &[Option<&Tensor>],
        target: usize,
        mode: LatentMode,
    ) -> Result<Tensor> {
        if target >= self.num_modalities() {
            return Err(Error::contract(format!(
                "unknown target modality index {target}"
            )));
        }
        let batch = sources
            .iter()
            .flatten()
            .map(|x| x.rows())
            .next()
            .ok_or_else(|| Error::contract("cross-modal generation needs at least one source"))?;
        let q = self.encode_multimodal(sources, batch)?;
        let z = match mode {
            LatentMode::Mean => q.mean,
            LatentMode::Sample(seed) => {
                let mut rng = SplitRng::new(seed);
                let rows: Vec<Vec<f64>> = q.rows().iter().map(|g| g.sample(&mut rng)).collect();
                Tensor::from_rows(&rows)?
            }
        };
        let out = self.decode_to_data(target, &z)?;
        Ok(outputs::mean_output(
            self.spec.modalities[target].likelihood,
            &out,
        ))
    }

    /// Posterior mean of the multimodal latent; the representation handed
    /// to policies.
    pub fn latent_mean(&self, inputs: &[Option<&Tensor>], batch: usize) -> Result<Tensor> {
        Ok(self.encode_multimodal(inputs, batch)?.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn tiny(variant: Variant) -> MuseModel {
        let mods = vec![
            ModalitySpec::new("a", 4, Likelihood::Bernoulli, 2)
                .with_hidden(vec![6], Activation::Swish),
            ModalitySpec::new("b", 3, Likelihood::Categorical, 2)
                .with_hidden(vec![5], Activation::Relu),
        ];
        let mut spec = ModelSpec::build(variant, mods, 3).unwrap();
        spec.top_hidden = vec![4];
        spec.fusion_hidden = vec![5];
        MuseModel::new(spec, 1).unwrap()
    }

    #[test]
    fn zero_head_encodes_the_prior() {
        let mut model = tiny(Variant::Muse);
        model
            .spec
            .bottom_encoder(0)
            .zero_output_layer(&mut model.params)
            .unwrap();
        let q = model
            .encode_modality(0, &Tensor::full(&[3, 4], 0.7))
            .unwrap();
        assert_eq!(q.batch(), 3);
        assert!(q
            .mean
            .data()
            .iter()
            .chain(q.logvar.data())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn empty_availability_yields_prior() {
        for v in [Variant::Muse, Variant::MuseH, Variant::FlatMvae] {
            let q = tiny(v).encode_multimodal(&[None, None], 2).unwrap();
            assert_eq!(q, GaussianBatch::standard(2, 3));
        }
    }

    #[test]
    fn single_expert_adds_unit_precision() {
        let model = tiny(Variant::Muse);
        let x = Tensor::full(&[1, 4], 0.3);
        let c = model.expert_input(0, &x).unwrap();
        let e = model.expert(0, &c).unwrap().row(0);
        let q = model
            .encode_multimodal(&[Some(&x), None], 1)
            .unwrap()
            .row(0);
        for (pe, pq) in e.precision().iter().zip(q.precision()) {
            assert!((pe + 1.0 - pq).abs() < 1e-12 * pq);
        }
    }

    #[test]
    fn fusion_tolerates_missing_blocks() {
        let model = tiny(Variant::FusionVae);
        let x = Tensor::full(&[2, 4], 0.5);
        let q = model.encode_multimodal(&[Some(&x), None], 2).unwrap();
        assert!(q.mean.is_finite());
        let y = model
            .cross_modal_generate(&[Some(&x), None], 1, LatentMode::Mean)
            .unwrap();
        assert_eq!(y.shape(), &[2, 3]);
    }

    #[test]
    fn generation_rejects_empty_sources_and_bad_target() {
        let model = tiny(Variant::Muse);
        assert!(model
            .cross_modal_generate(&[None, None], 0, LatentMode::Mean)
            .is_err());
        let x = Tensor::full(&[1, 4], 0.5);
        assert!(model
            .cross_modal_generate(&[Some(&x), None], 5, LatentMode::Mean)
            .is_err());
    }
}
