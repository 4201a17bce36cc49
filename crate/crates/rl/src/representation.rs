//! Frozen representation models for the control environments: frame
//! collection, model presets, and training.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use muse_core::config::Config;
use muse_core::data::{MultimodalDataset, Split};
use muse_core::error::{Error, Result};
use muse_core::model::{
    fit, Likelihood, ModalitySpec, ModelSpec, MuseModel, TrainConfig, TrainLog, Variant,
};
use muse_core::nn::Activation;
use muse_core::rng::SplitRng;
use muse_core::tensor::Tensor;
use muse_envs::hyperhot::{self, Hyperhot, HyperhotConfig};
use muse_envs::pendulum::{pendulum_observe, wrap_angle, Pendulum, PendulumConfig, PendulumState};
use muse_envs::{Action, Env, IMAGE, SOUND};

use crate::adapter::{Adapter, AdapterKind, SoundNorm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Pendulum,
    Hyperhot,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::Hyperhot => "hyperhot",
        })
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvKind::Pendulum),
            "hyperhot" => Ok(EnvKind::Hyperhot),
            other => Err(Error::config(
                "env.name",
                format!("unknown environment `{other}`"),
            )),
        }
    }
}

/// Both environment configs, read from their own sections.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvConfigs {
    pub pendulum: PendulumConfig,
    pub hyperhot: HyperhotConfig,
}

impl EnvConfigs {
    pub fn from_config(cfg: &Config, kind: EnvKind) -> Result<Self> {
        let mut out = Self::default();
        match kind {
            EnvKind::Pendulum => out.pendulum = PendulumConfig::from_config(cfg)?,
            EnvKind::Hyperhot => out.hyperhot = HyperhotConfig::from_config(cfg)?,
        }
        Ok(out)
    }

    pub fn make(&self, kind: EnvKind) -> Result<Box<dyn Env>> {
        Ok(match kind {
            EnvKind::Pendulum => Box::new(Pendulum::new(self.pendulum.clone())?),
            EnvKind::Hyperhot => Box::new(Hyperhot::new(self.hyperhot.clone())?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationConfig {
    pub frames: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl RepresentationConfig {
    pub fn defaults(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Pendulum => Self {
                frames: 8000,
                epochs: 15,
                batch_size: 64,
                learning_rate: 1e-3,
            },
            EnvKind::Hyperhot => Self {
                frames: 10000,
                epochs: 15,
                batch_size: 64,
                learning_rate: 1e-3,
            },
        }
    }

    pub fn from_config(cfg: &Config, kind: EnvKind) -> Result<Self> {
        let d = Self::defaults(kind);
        let s = "representation";
        Ok(Self {
            frames: cfg.get_or(s, "frames", d.frames)?,
            epochs: cfg.get_or(s, "epochs", d.epochs)?,
            batch_size: cfg.get_or(s, "batch_size", d.batch_size)?,
            learning_rate: cfg.get_or(s, "learning_rate", d.learning_rate)?,
        })
    }
}

/// Single frames at uniformly drawn angles and speeds.
pub fn pendulum_frames(cfg: &PendulumConfig, n: usize, seed: u64) -> Result<(Tensor, Tensor)> {
    let mut rng = SplitRng::derive_labeled(seed, "frames/pendulum");
    let (mut img, mut snd) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let s = PendulumState {
            theta: wrap_angle(rng.uniform_range(-PI, PI)),
            theta_dot: rng.uniform_range(-cfg.max_speed, cfg.max_speed),
            steps: 0,
        };
        let o = pendulum_observe(cfg, &s)?;
        img.extend(o.image);
        snd.extend(o.sound);
    }
    Ok((
        Tensor::new(vec![n, cfg.image_size * cfg.image_size], img)?,
        Tensor::new(vec![n, cfg.sound_dim()], snd)?,
    ))
}

/// Frames from episodes played alternately by the scripted policy and by
/// uniformly random actions.
pub fn hyperhot_frames(cfg: &HyperhotConfig, n: usize, seed: u64) -> Result<(Tensor, Tensor)> {
    let mut env = Hyperhot::new(cfg.clone())?;
    let mut rng = SplitRng::derive_labeled(seed, "frames/hyperhot");
    let (mut img, mut snd) = (Vec::new(), Vec::new());
    let mut count = 0;
    let mut episode = 0u64;
    while count < n {
        let o = env.reset(SplitRng::derive(seed, episode).next_seed())?;
        let scripted = episode % 2 == 0;
        episode += 1;
        img.extend(o.image);
        snd.extend(o.sound);
        count += 1;
        while count < n {
            let a = if scripted && !rng.bernoulli(0.2) {
                hyperhot::scripted_action(&env.cfg, &env.state)
            } else {
                rng.below(hyperhot::ACTIONS)
            };
            let st = env.step(Action::Discrete(a))?;
            img.extend(st.obs.image);
            snd.extend(st.obs.sound);
            count += 1;
            if st.done {
                break;
            }
        }
    }
    Ok((
        Tensor::new(vec![n, cfg.image_size * cfg.image_size], img)?,
        Tensor::new(vec![n, cfg.sound_dim()], snd)?,
    ))
}

pub fn collect_frames(
    kind: EnvKind,
    envs: &EnvConfigs,
    n: usize,
    seed: u64,
) -> Result<(Tensor, Tensor)> {
    match kind {
        EnvKind::Pendulum => pendulum_frames(&envs.pendulum, n, seed),
        EnvKind::Hyperhot => hyperhot_frames(&envs.hyperhot, n, seed),
    }
}

/// Image and standardized-sound modalities with per-environment latent sizes.
pub fn representation_spec(
    kind: EnvKind,
    variant: Variant,
    image_dim: usize,
    sound_dim: usize,
) -> Result<ModelSpec> {
    let (zi, zs, zt, hidden) = match kind {
        EnvKind::Pendulum => (16, 8, 10, vec![128, 128]),
        EnvKind::Hyperhot => (64, 64, 40, vec![256, 256]),
    };
    let image = ModalitySpec::new(IMAGE, image_dim, Likelihood::Bernoulli, zi)
        .with_hidden(hidden.clone(), Activation::Swish);
    let sound = ModalitySpec::new(SOUND, sound_dim, Likelihood::Gaussian, zs)
        .with_weights(50.0, 1.0, 10.0)
        .with_hidden(vec![128, 128], Activation::Swish);
    let mut spec = ModelSpec::build(variant, vec![image, sound], zt)?;
    spec.fusion_hidden = hidden;
    Ok(spec)
}

/// Collect frames, fit the sound normalization and, for latent kinds,
/// train the representation model.
pub fn build_adapter(
    kind: EnvKind,
    adapter: AdapterKind,
    envs: &EnvConfigs,
    rc: &RepresentationConfig,
    seed: u64,
) -> Result<(Adapter, Option<TrainLog>)> {
    let frames = rc.frames.max(1);
    let (image, sound) = collect_frames(kind, envs, frames, seed)?;
    let norm = SoundNorm::fit(&sound)?;
    let Some(variant) = adapter.variant() else {
        return Ok((Adapter::raw(adapter, image.row_len(), norm)?, None));
    };
    let sound = norm.apply_rows(&sound)?;
    let spec = representation_spec(kind, variant, image.row_len(), sound.row_len())?;
    let mut model = MuseModel::new(spec, seed)?;
    let data = MultimodalDataset::new(
        vec![IMAGE.into(), SOUND.into()],
        vec![image, sound],
        Split::Train,
        None,
    )?;
    let tc = TrainConfig {
        epochs: rc.epochs,
        batch_size: rc.batch_size,
        learning_rate: rc.learning_rate,
        seed,
        shuffle: true,
    };
    let log = fit(&mut model, &data, &tc)?;
    Ok((Adapter::latent(adapter, model, norm)?, Some(log)))
}
