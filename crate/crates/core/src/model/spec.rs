//! Model descriptions: modalities, variant, weights, and network layout.

use std::fmt;
use std::str::FromStr;

use crate::config::{join_list, Config};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Likelihood {
    Bernoulli,
    Categorical,
    /// Diagonal Gaussian with unit variance.
    Gaussian,
}

impl fmt::Display for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Likelihood::Bernoulli => "bernoulli",
            Likelihood::Categorical => "categorical",
            Likelihood::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Likelihood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Likelihood::Bernoulli),
            "categorical" => Ok(Likelihood::Categorical),
            "gaussian" => Ok(Likelihood::Gaussian),
            other => Err(Error::config(
                "likelihood",
                format!("unknown likelihood `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Two-level model with the subset-alignment term.
    Muse,
    /// Single level: PoE experts read raw modalities, decoders emit them.
    MuseH,
    /// Two-level model without the alignment term.
    MuseA,
    /// Single-level PoE trained on the joint and every single-modality ELBO.
    FlatMvae,
    /// One encoder over the concatenated modalities.
    FusionVae,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Muse,
        Variant::MuseH,
        Variant::MuseA,
        Variant::FlatMvae,
        Variant::FusionVae,
    ];

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Variant::Muse | Variant::MuseA)
    }

    /// Uses per-modality experts combined by a product.
    pub fn is_poe(self) -> bool {
        !matches!(self, Variant::FusionVae)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Muse => "muse",
            Variant::MuseH => "muse_h",
            Variant::MuseA => "muse_a",
            Variant::FlatMvae => "flat_mvae",
            Variant::FusionVae => "fusion_vae",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalitySpec {
    pub name: String,
    pub data_dim: usize,
    pub likelihood: Likelihood,
    /// Bottom latent size; unused by single-level variants.
    pub latent_dim: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl ModalitySpec {
    pub fn new(name: &str, data_dim: usize, likelihood: Likelihood, latent_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            data_dim,
            likelihood,
            latent_dim,
            lambda: 1.0,
            alpha: 1.0,
            gamma: 10.0,
            hidden: vec![128, 128],
            activation: Activation::Swish,
        }
    }

    pub fn with_weights(mut self, lambda: f64, alpha: f64, gamma: f64) -> Self {
        self.lambda = lambda;
        self.alpha = alpha;
        self.gamma = gamma;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>, activation: Activation) -> Self {
        self.hidden = hidden;
        self.activation = activation;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub modalities: Vec<ModalitySpec>,
    pub top_latent_dim: usize,
    /// Hidden widths of the top-level expert encoders and code decoders.
    pub top_hidden: Vec<usize>,
    /// Hidden widths of the fusion encoder/decoder.
    pub fusion_hidden: Vec<usize>,
    pub beta: f64,
    pub delta: f64,
}

fn rev(v: &[usize]) -> Vec<usize> {
    v.iter().rev().copied().collect()
}

impl ModelSpec {
    /// Spec with the default weights; `muse_a` forces `delta = 0`.
    pub fn build(
        variant: Variant,
        modalities: Vec<ModalitySpec>,
        top_latent_dim: usize,
    ) -> Result<Self> {
        let fusion_hidden = modalities
            .iter()
            .max_by_key(|m| m.data_dim)
            .map(|m| m.hidden.clone())
            .unwrap_or_default();
        let spec = Self {
            variant,
            modalities,
            top_latent_dim,
            top_hidden: vec![128, 128],
            fusion_hidden,
            beta: 1.0,
            delta: if variant == Variant::MuseA { 0.0 } else { 1.0 },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        let mut s = self.clone();
        s.variant = variant;
        if variant == Variant::MuseA {
            s.delta = 0.0;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::config(
                "model.modalities",
                "at least one modality required",
            ));
        }
        if self.top_latent_dim == 0 {
            return Err(Error::config("model.top_latent_dim", "must be positive"));
        }
        for m in &self.modalities {
            let key = |k: &str| format!("modality.{}.{k}", m.name);
            if m.name.is_empty() || m.name.contains(['/', ',', ' ', '[', ']', '=']) {
                return Err(Error::config(
                    key("name"),
                    "modality names must be non-empty and plain",
                ));
            }
            if m.data_dim == 0 {
                return Err(Error::config(key("data_dim"), "must be positive"));
            }
            if m.latent_dim == 0 {
                return Err(Error::config(key("latent_dim"), "must be positive"));
            }
            for (k, w) in [("lambda", m.lambda), ("alpha", m.alpha), ("gamma", m.gamma)] {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::config(key(k), "must be finite and non-negative"));
                }
            }
        }
        let mut names: Vec<&str> = self.modalities.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.modalities.len() {
            return Err(Error::config("model.modalities", "duplicate modality name"));
        }
        for (k, w) in [("beta", self.beta), ("delta", self.delta)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::config(
                    format!("model.{k}"),
                    "must be finite and non-negative",
                ));
            }
        }
        if self.variant == Variant::MuseA && self.delta != 0.0 {
            return Err(Error::config("model.delta", "muse_a requires delta = 0"));
        }
        Ok(())
    }

    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.modalities
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::contract(format!("unknown modality `{name}`")))
    }

    pub fn names(&self) -> Vec<String> {
        self.modalities.iter().map(|m| m.name.clone()).collect()
    }

    pub fn total_data_dim(&self) -> usize {
        self.modalities.iter().map(|m| m.data_dim).sum()
    }

    /// Column offset of modality `m` inside the concatenated data vector.
    pub fn data_offset(&self, m: usize) -> usize {
        self.modalities[..m].iter().map(|s| s.data_dim).sum()
    }

    pub fn bottom_encoder(&self, m: usize) -> Mlp {
        let s = &self.modalities[m];
        Mlp::new(
            format!("bottom/{}/enc", s.name),
            s.data_dim,
            &s.hidden,
            2 * s.latent_dim,
            s.activation,
        )
    }

    pub fn bottom_decoder(&self, m: usize) -> Mlp {
        let s = &self.modalities[m];
        Mlp::new(
            format!("bottom/{}/dec", s.name),
            s.latent_dim,
            &rev(&s.hidden),
            s.data_dim,
            s.activation,
        )
    }

    /// Expert network emitting `[mean, logvar]` of the multimodal latent.
    pub fn expert(&self, m: usize) -> Mlp {
        let s = &self.modalities[m];
        let z = 2 * self.top_latent_dim;
        if self.variant.is_hierarchical() {
            Mlp::new(
                format!("top/{}/enc", s.name),
                s.latent_dim,
                &self.top_hidden,
                z,
                Activation::Relu,
            )
        } else {
            Mlp::new(
                format!("top/{}/enc", s.name),
                s.data_dim,
                &s.hidden,
                z,
                s.activation,
            )
        }
    }

    /// Decoder from the multimodal latent: to codes for hierarchical
    /// variants, to data otherwise.
    pub fn top_decoder(&self, m: usize) -> Mlp {
        let s = &self.modalities[m];
        if self.variant.is_hierarchical() {
            Mlp::new(
                format!("top/{}/dec", s.name),
                self.top_latent_dim,
                &rev(&self.top_hidden),
                s.latent_dim,
                Activation::Relu,
            )
        } else {
            Mlp::new(
                format!("top/{}/dec", s.name),
                self.top_latent_dim,
                &rev(&s.hidden),
                s.data_dim,
                s.activation,
            )
        }
    }

    pub fn fusion_encoder(&self) -> Mlp {
        Mlp::new(
            "fusion/enc",
            self.total_data_dim(),
            &self.fusion_hidden,
            2 * self.top_latent_dim,
            Activation::Swish,
        )
    }

    pub fn fusion_decoder(&self) -> Mlp {
        Mlp::new(
            "fusion/dec",
            self.top_latent_dim,
            &rev(&self.fusion_hidden),
            self.total_data_dim(),
            Activation::Swish,
        )
    }

    /// Every network the variant owns.
    pub fn networks(&self) -> Vec<Mlp> {
        let mut nets = Vec::new();
        match self.variant {
            Variant::Muse | Variant::MuseA => {
                for m in 0..self.num_modalities() {
                    nets.push(self.bottom_encoder(m));
                    nets.push(self.bottom_decoder(m));
                    nets.push(self.expert(m));
                    nets.push(self.top_decoder(m));
                }
            }
            Variant::MuseH | Variant::FlatMvae => {
                for m in 0..self.num_modalities() {
                    nets.push(self.expert(m));
                    nets.push(self.top_decoder(m));
                }
            }
            Variant::FusionVae => {
                nets.push(self.fusion_encoder());
                nets.push(self.fusion_decoder());
            }
        }
        nets
    }

    /// Write as `[model]` and `[modality.<name>]` sections.
    pub fn write_config(&self, cfg: &mut Config) {
        cfg.set("model", "variant", self.variant);
        cfg.set("model", "modalities", join_list(&self.names()));
        cfg.set("model", "top_latent_dim", self.top_latent_dim);
        cfg.set("model", "top_hidden", join_list(&self.top_hidden));
        cfg.set("model", "fusion_hidden", join_list(&self.fusion_hidden));
        cfg.set("model", "beta", self.beta);
        cfg.set("model", "delta", self.delta);
        for m in &self.modalities {
            let s = format!("modality.{}", m.name);
            cfg.set(&s, "data_dim", m.data_dim);
            cfg.set(&s, "likelihood", m.likelihood);
            cfg.set(&s, "latent_dim", m.latent_dim);
            cfg.set(&s, "lambda", m.lambda);
            cfg.set(&s, "alpha", m.alpha);
            cfg.set(&s, "gamma", m.gamma);
            cfg.set(&s, "hidden", join_list(&m.hidden));
            cfg.set(&s, "activation", m.activation);
        }
    }

    /// Read from a config, filling unspecified keys from `defaults` when
    /// given. Modalities come from `model.modalities` or the defaults.
    pub fn from_config(cfg: &Config, defaults: Option<&ModelSpec>) -> Result<Self> {
        let variant: Variant = match cfg.get::<String>("model", "variant")? {
            Some(v) => v
                .parse()
                .map_err(|_| Error::config("model.variant", format!("unknown variant `{v}`")))?,
            None => defaults
                .map(|d| d.variant)
                .ok_or_else(|| Error::config("model.variant", "required key is missing"))?,
        };
        let default_names = defaults.map(ModelSpec::names).unwrap_or_default();
        let names: Vec<String> = cfg.get_list_or("model", "modalities", default_names)?;
        if names.is_empty() {
            return Err(Error::config(
                "model.modalities",
                "at least one modality required",
            ));
        }
        let mut modalities = Vec::with_capacity(names.len());
        for name in &names {
            let section = format!("modality.{name}");
            let d = defaults.and_then(|d| d.modalities.iter().find(|m| &m.name == name));
            let data_dim: usize = match d {
                Some(d) => cfg.get_or(&section, "data_dim", d.data_dim)?,
                None => cfg.require(&section, "data_dim")?,
            };
            let likelihood: String = match d {
                Some(d) => cfg.get_or(&section, "likelihood", d.likelihood.to_string())?,
                None => cfg.require(&section, "likelihood")?,
            };
            let likelihood: Likelihood = likelihood.parse().map_err(|_| {
                Error::config(
                    format!("{section}.likelihood"),
                    format!("unknown likelihood `{likelihood}`"),
                )
            })?;
            let base = d
                .cloned()
                .unwrap_or_else(|| ModalitySpec::new(name, data_dim, likelihood, 8));
            let activation: Activation = {
                let a: String = cfg.get_or(&section, "activation", base.activation.to_string())?;
                a.parse().map_err(|_| {
                    Error::config(
                        format!("{section}.activation"),
                        format!("unknown activation `{a}`"),
                    )
                })?
            };
            modalities.push(ModalitySpec {
                name: name.clone(),
                data_dim,
                likelihood,
                latent_dim: cfg.get_or(&section, "latent_dim", base.latent_dim)?,
                lambda: cfg.get_or(&section, "lambda", base.lambda)?,
                alpha: cfg.get_or(&section, "alpha", base.alpha)?,
                gamma: cfg.get_or(&section, "gamma", base.gamma)?,
                hidden: cfg.get_list_or(&section, "hidden", base.hidden.clone())?,
                activation,
            });
        }
        let mut spec = ModelSpec::build(
            variant,
            modalities,
            defaults.map_or(8, |d| d.top_latent_dim),
        )?;
        spec.top_latent_dim = cfg.get_or("model", "top_latent_dim", spec.top_latent_dim)?;
        let top_default = defaults.map_or(spec.top_hidden.clone(), |d| d.top_hidden.clone());
        spec.top_hidden = cfg.get_list_or("model", "top_hidden", top_default)?;
        let fusion_default =
            defaults.map_or(spec.fusion_hidden.clone(), |d| d.fusion_hidden.clone());
        spec.fusion_hidden = cfg.get_list_or("model", "fusion_hidden", fusion_default)?;
        spec.beta = cfg.get_or("model", "beta", defaults.map_or(spec.beta, |d| d.beta))?;
        let delta_default = match (variant, defaults) {
            (Variant::MuseA, _) => 0.0,
            (_, Some(d)) if d.variant != Variant::MuseA => d.delta,
            _ => 1.0,
        };
        spec.delta = cfg.get_or("model", "delta", delta_default)?;
        spec.validate()?;
        Ok(spec)
    }
}
