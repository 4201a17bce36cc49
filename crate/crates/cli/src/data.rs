//! Dataset selection for the model commands.

use std::path::{Path, PathBuf};

use muse_core::config::Config;
use muse_core::data::{bars, mnist, MultimodalDataset, Split};
use muse_core::error::{Error, Result};
use muse_core::model::{checkpoint, ModelSpec, TrainConfig, Variant};
use muse_core::presets;
use muse_core::rng::SplitRng;
use muse_envs::{IMAGE, SOUND};
use muse_rl::adapter::SoundNorm;
use muse_rl::representation::{
    collect_frames, representation_spec, EnvConfigs, EnvKind, RepresentationConfig,
};

pub enum DataSource {
    Bars {
        train: usize,
        test: usize,
        image_size: usize,
        noise_sd: f64,
    },
    Mnist {
        dir: PathBuf,
        train: usize,
        test: usize,
    },
    Env {
        kind: EnvKind,
        envs: EnvConfigs,
        train: usize,
        test: usize,
        rc: RepresentationConfig,
    },
}

/// Where an environment checkpoint keeps its sound normalization.
pub fn norm_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".norm");
    PathBuf::from(s)
}

pub fn read_norm(path: &Path) -> Result<SoundNorm> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        Error::Mismatch(format!(
            "{} is missing; the checkpoint was not trained on an environment",
            path.display()
        ))
    })?;
    SoundNorm::from_text(&text)
}

fn test_seed(seed: u64) -> u64 {
    SplitRng::derive_labeled(seed, "data/test").next_seed()
}

impl DataSource {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let s = "data";
        let name: String = cfg.get_or(s, "dataset", "bars".to_string())?;
        Ok(match name.as_str() {
            "bars" => DataSource::Bars {
                train: cfg.get_or(s, "train_size", presets::BARS_TRAIN)?,
                test: cfg.get_or(s, "test_size", presets::BARS_TEST)?,
                image_size: cfg.get_or(s, "image_size", presets::BARS_IMAGE_SIZE)?,
                noise_sd: cfg.get_or(s, "noise_sd", presets::BARS_NOISE_SD)?,
            },
            "mnist" => {
                let dir: PathBuf = cfg.get_or(s, "dir", "data/mnist".to_string())?.into();
                for split in [Split::Train, Split::Test] {
                    let (img, lbl) = mnist::split_paths(&dir, split);
                    if !(img.is_file() && lbl.is_file()) {
                        return Err(Error::config(
                            "data.dir",
                            format!("no MNIST files under {}", dir.display()),
                        ));
                    }
                }
                DataSource::Mnist {
                    dir,
                    train: cfg.get_or(s, "train_size", presets::MNIST_TRAIN)?,
                    test: cfg.get_or(s, "test_size", 1000)?,
                }
            }
            "pendulum" | "hyperhot" => {
                let kind: EnvKind = name.parse()?;
                let rc = RepresentationConfig::defaults(kind);
                DataSource::Env {
                    kind,
                    envs: EnvConfigs::from_config(cfg, kind)?,
                    train: cfg.get_or(s, "frames", rc.frames)?,
                    test: cfg.get_or(s, "test_frames", 1000)?,
                    rc,
                }
            }
            other => {
                return Err(Error::config(
                    "data.dataset",
                    format!("unknown dataset `{other}` (bars, mnist, pendulum, hyperhot)"),
                ))
            }
        })
    }

    pub fn preset(&self, variant: Variant) -> Result<ModelSpec> {
        match self {
            DataSource::Bars { image_size, .. } => {
                let mut spec = presets::bars_spec(variant)?;
                spec.modalities[0].data_dim = image_size * image_size;
                Ok(spec)
            }
            DataSource::Mnist { .. } => presets::mnist_spec(variant),
            DataSource::Env { kind, envs, .. } => {
                let (side, sound) = match kind {
                    EnvKind::Pendulum => (envs.pendulum.image_size, envs.pendulum.sound_dim()),
                    EnvKind::Hyperhot => (envs.hyperhot.image_size, envs.hyperhot.sound_dim()),
                };
                representation_spec(*kind, variant, side * side, sound)
            }
        }
    }

    pub fn train_defaults(&self, seed: u64) -> TrainConfig {
        match self {
            DataSource::Bars { .. } => presets::bars_train_config(seed),
            DataSource::Mnist { .. } => presets::mnist_train_config(seed),
            DataSource::Env { rc, .. } => TrainConfig {
                epochs: rc.epochs,
                batch_size: rc.batch_size,
                learning_rate: rc.learning_rate,
                seed,
                shuffle: true,
            },
        }
    }

    pub fn is_env(&self) -> bool {
        matches!(self, DataSource::Env { .. })
    }

    /// Load a split. Environment sound is standardized with `norm`, fitted
    /// on the frames when absent; the normalization used is returned.
    pub fn load(
        &self,
        split: Split,
        seed: u64,
        norm: Option<SoundNorm>,
    ) -> Result<(MultimodalDataset, Option<SoundNorm>)> {
        let seed = match split {
            Split::Train => seed,
            Split::Test => test_seed(seed),
        };
        match self {
            DataSource::Bars {
                train,
                test,
                image_size,
                noise_sd,
            } => {
                let n = if split == Split::Train { *train } else { *test };
                let mut d = bars::make_synthetic_bars(n, *image_size, *noise_sd, seed)?;
                d.split = split;
                Ok((d, None))
            }
            DataSource::Mnist { dir, train, test } => {
                let (img, lbl) = mnist::split_paths(dir, split);
                let n = if split == Split::Train { *train } else { *test };
                let d = mnist::load_mnist_pair(&img, &lbl, Some(n), split)
                    .map_err(|e| Error::config("data.dir", e.to_string()))?;
                Ok((d, None))
            }
            DataSource::Env {
                kind,
                envs,
                train,
                test,
                ..
            } => {
                let n = if split == Split::Train { *train } else { *test };
                let (image, sound) = collect_frames(*kind, envs, n.max(1), seed)?;
                let norm = match norm {
                    Some(n) => n,
                    None => SoundNorm::fit(&sound)?,
                };
                let sound = norm.apply_rows(&sound)?;
                let d = MultimodalDataset::new(
                    vec![IMAGE.into(), SOUND.into()],
                    vec![image, sound],
                    split,
                    None,
                )?;
                Ok((d, Some(norm)))
            }
        }
    }

    /// Test split matched to a checkpoint: generated data reuses the
    /// checkpoint's seed, environment sound its normalization.
    pub fn load_test_for(&self, ckpt: &Path, ckpt_seed: u64) -> Result<MultimodalDataset> {
        let norm = if self.is_env() {
            Some(read_norm(&norm_path(ckpt))?)
        } else {
            None
        };
        Ok(self.load(Split::Test, ckpt_seed, norm)?.0)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(muse_core::model::MuseModel, u64)> {
    if !path.is_file() {
        return Err(Error::config(
            "checkpoint",
            format!("{} does not exist", path.display()),
        ));
    }
    checkpoint::load(path)
}
