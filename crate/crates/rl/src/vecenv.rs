//! Environments seen through an observation adapter as flat vectors.

use muse_core::error::Result;
use muse_core::rng::SplitRng;
use muse_envs::{Action, ActionSpace, Env, ModalityMask};

use crate::adapter::Adapter;

pub struct VecStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

pub trait VecEnv {
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: Action) -> Result<VecStep>;
}

/// Applies a fixed modality mask and the adapter to every observation.
/// In training mode the dropout adapter additionally hides modalities at random.
pub struct AdaptedEnv<'a> {
    pub env: &'a mut dyn Env,
    pub adapter: &'a Adapter,
    pub mask: ModalityMask,
    dropout_rng: Option<SplitRng>,
}

impl<'a> AdaptedEnv<'a> {
    pub fn evaluation(env: &'a mut dyn Env, adapter: &'a Adapter, mask: ModalityMask) -> Self {
        Self {
            env,
            adapter,
            mask,
            dropout_rng: None,
        }
    }

    pub fn training(env: &'a mut dyn Env, adapter: &'a Adapter, seed: u64) -> Self {
        Self {
            env,
            adapter,
            mask: ModalityMask::JOINT,
            dropout_rng: Some(SplitRng::derive_labeled(seed, "adapter/dropout")),
        }
    }

    fn adapt(&mut self, obs: muse_envs::Observation) -> Result<Vec<f64>> {
        let obs = obs.masked(self.mask);
        match self.dropout_rng.as_mut() {
            Some(rng) => self.adapter.observe_training(&obs, rng),
            None => self.adapter.observe(&obs),
        }
    }
}

impl VecEnv for AdaptedEnv<'_> {
    fn obs_dim(&self) -> usize {
        self.adapter.dim()
    }

    fn action_space(&self) -> ActionSpace {
        self.env.action_space()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let o = self.env.reset(seed)?;
        self.adapt(o)
    }

    fn step(&mut self, action: Action) -> Result<VecStep> {
        let s = self.env.step(action)?;
        Ok(VecStep {
            obs: self.adapt(s.obs)?,
            reward: s.reward,
            done: s.done,
            truncated: s.truncated,
        })
    }
}
