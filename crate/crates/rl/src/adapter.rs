//! Observation adapters: how a policy sees a multimodal observation.

use std::fmt;
use std::str::FromStr;

use muse_core::config::{join_list, Config};
use muse_core::error::{Error, Result};
use muse_core::model::{MuseModel, Variant};
use muse_core::rng::{fnv1a, SplitRng};
use muse_core::tensor::Tensor;
use muse_envs::{ModalityMask, Observation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdapterKind {
    /// Image and sound concatenated, zeros for missing blocks.
    RawFusion,
    /// As `RawFusion`, with modalities hidden at random while training.
    RawFusionDropout,
    /// Posterior mean of a single-encoder VAE over the concatenation.
    VaeLatent,
    /// Posterior mean of a flat product-of-experts VAE.
    MvaeLatent,
    /// Posterior mean of the two-level model.
    MuseLatent,
}

impl AdapterKind {
    pub const ALL: [AdapterKind; 5] = [
        AdapterKind::RawFusion,
        AdapterKind::RawFusionDropout,
        AdapterKind::VaeLatent,
        AdapterKind::MvaeLatent,
        AdapterKind::MuseLatent,
    ];

    /// Representation model variant backing a latent kind.
    pub fn variant(self) -> Option<Variant> {
        match self {
            AdapterKind::RawFusion | AdapterKind::RawFusionDropout => None,
            AdapterKind::VaeLatent => Some(Variant::FusionVae),
            AdapterKind::MvaeLatent => Some(Variant::FlatMvae),
            AdapterKind::MuseLatent => Some(Variant::Muse),
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdapterKind::RawFusion => "raw_fusion",
            AdapterKind::RawFusionDropout => "raw_fusion_dropout",
            AdapterKind::VaeLatent => "vae_latent",
            AdapterKind::MvaeLatent => "mvae_latent",
            AdapterKind::MuseLatent => "muse_latent",
        })
    }
}

impl FromStr for AdapterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdapterKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::config("agent.adapter", format!("unknown adapter `{s}`")))
    }
}

/// Per-feature affine standardization of the sound vector, fitted on the
/// representation training data.
#[derive(Clone, Debug, PartialEq)]
pub struct SoundNorm {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl SoundNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            sd: vec![1.0; dim],
        }
    }

    /// Column statistics of `[N, d]` sound rows; tiny spreads are floored.
    pub fn fit(rows: &Tensor) -> Result<Self> {
        if rows.rank() != 2 || rows.rows() == 0 {
            return Err(Error::contract(
                "sound normalization needs a non-empty [N, d] tensor",
            ));
        }
        let (n, d) = (rows.rows() as f64, rows.row_len());
        let mut mean = vec![0.0; d];
        for i in 0..rows.rows() {
            mean.iter_mut()
                .zip(rows.row(i))
                .for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for i in 0..rows.rows() {
            for (j, v) in rows.row(i).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2) / n;
            }
        }
        Ok(Self {
            mean,
            sd: var.into_iter().map(|v| v.sqrt().max(1e-3)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, sound: &[f64]) -> Vec<f64> {
        sound
            .iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// `[sound_norm]` section with `mean` and `sd` lists.
    pub fn to_text(&self) -> String {
        let mut cfg = Config::new();
        cfg.set("sound_norm", "mean", join_list(&self.mean));
        cfg.set("sound_norm", "sd", join_list(&self.sd));
        cfg.to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg = Config::parse(text)?;
        let mean: Vec<f64> = cfg.require_list("sound_norm", "mean")?;
        let sd: Vec<f64> = cfg.require_list("sound_norm", "sd")?;
        if mean.len() != sd.len() || sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Mismatch(
                "sound normalization needs equal-length mean and positive sd".into(),
            ));
        }
        Ok(Self { mean, sd })
    }

    pub fn apply_rows(&self, rows: &Tensor) -> Result<Tensor> {
        let data = (0..rows.rows())
            .flat_map(|i| self.apply(rows.row(i)))
            .collect();
        Tensor::new(rows.shape().to_vec(), data)
    }
}

#[derive(Clone, Debug)]
pub struct Adapter {
    pub kind: AdapterKind,
    pub image_dim: usize,
    pub norm: SoundNorm,
    /// Frozen representation model for latent kinds; modality 0 is the
    /// image and modality 1 the sound.
    pub model: Option<MuseModel>,
    pub dropout: f64,
}

pub const DEFAULT_DROPOUT: f64 = 0.2;

impl Adapter {
    pub fn raw(kind: AdapterKind, image_dim: usize, norm: SoundNorm) -> Result<Self> {
        if kind.variant().is_some() {
            return Err(Error::contract(format!(
                "{kind} needs a trained representation model"
            )));
        }
        Ok(Self {
            kind,
            image_dim,
            norm,
            model: None,
            dropout: DEFAULT_DROPOUT,
        })
    }

    pub fn latent(kind: AdapterKind, model: MuseModel, norm: SoundNorm) -> Result<Self> {
        let want = kind
            .variant()
            .ok_or_else(|| Error::contract(format!("{kind} takes no representation model")))?;
        if model.variant() != want {
            return Err(Error::Mismatch(format!(
                "{kind} expects a {want} model, got {}",
                model.variant()
            )));
        }
        if model.num_modalities() != 2 || model.spec.modalities[1].data_dim != norm.dim() {
            return Err(Error::Mismatch(
                "representation model does not take (image, sound) inputs".into(),
            ));
        }
        Ok(Self {
            kind,
            image_dim: model.spec.modalities[0].data_dim,
            norm,
            model: Some(model),
            dropout: DEFAULT_DROPOUT,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            Some(m) => m.spec.top_latent_dim,
            None => self.image_dim + self.norm.dim(),
        }
    }

    /// Policy input for an observation, using only the modalities its mask
    /// marks available. Pure: no state is touched.
    pub fn observe(&self, obs: &Observation) -> Result<Vec<f64>> {
        if obs.image.len() != self.image_dim || obs.sound.len() != self.norm.dim() {
            return Err(Error::shape(
                "adapter",
                format!(
                    "expected image {} and sound {}, got {} and {}",
                    self.image_dim,
                    self.norm.dim(),
                    obs.image.len(),
                    obs.sound.len()
                ),
            ));
        }
        let mask = obs.mask;
        let Some(model) = &self.model else {
            if !mask.any() {
                return Err(Error::contract(
                    "raw adapter with every modality unavailable",
                ));
            }
            let mut out = Vec::with_capacity(self.dim());
            if mask.image {
                out.extend_from_slice(&obs.image);
            } else {
                out.resize(self.image_dim, 0.0);
            }
            if mask.sound {
                out.extend(self.norm.apply(&obs.sound));
            } else {
                out.resize(self.dim(), 0.0);
            }
            return Ok(out);
        };
        if !mask.any() && self.kind != AdapterKind::VaeLatent {
            return Ok(vec![0.0; self.dim()]);
        }
        let image = mask
            .image
            .then(|| Tensor::new(vec![1, self.image_dim], obs.image.clone()))
            .transpose()?;
        let sound = mask
            .sound
            .then(|| Tensor::new(vec![1, self.norm.dim()], self.norm.apply(&obs.sound)))
            .transpose()?;
        Ok(model
            .latent_mean(&[image.as_ref(), sound.as_ref()], 1)?
            .into_data())
    }

    /// As `observe`; the dropout kind also hides each modality with its
    /// dropout probability, keeping at least one.
    pub fn observe_training(&self, obs: &Observation, rng: &mut SplitRng) -> Result<Vec<f64>> {
        if self.kind != AdapterKind::RawFusionDropout {
            return self.observe(obs);
        }
        let mut keep = ModalityMask {
            image: !rng.bernoulli(self.dropout),
            sound: !rng.bernoulli(self.dropout),
        };
        if !keep.any() {
            keep = if rng.bernoulli(0.5) {
                ModalityMask::IMAGE_ONLY
            } else {
                ModalityMask::SOUND_ONLY
            };
        }
        let masked = obs.clone().masked(keep);
        if masked.mask.any() {
            self.observe(&masked)
        } else {
            self.observe(obs)
        }
    }

    /// Changes whenever the frozen model or normalization would.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = self.kind.to_string().into_bytes();
        for v in self.norm.mean.iter().chain(&self.norm.sd) {
            bytes.extend(v.to_le_bytes());
        }
        if let Some(m) = &self.model {
            bytes.extend(m.params.fingerprint().to_le_bytes());
        }
        fnv1a(&bytes)
    }
}
