//! Rollouts of frozen policies under modality masks, and the random baseline.

use std::fmt::Write as _;

use muse_core::error::{Error, Result};
use muse_core::rng::SplitRng;
use muse_envs::{Action, ActionSpace, Env, ModalityMask};

use crate::adapter::Adapter;
use crate::agent::Policy;
use crate::episode_seed;
use crate::vecenv::{AdaptedEnv, VecEnv};

/// How an episode is summarized into one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scoring {
    /// Mean reward per step.
    PerStep,
    /// Undiscounted return.
    Return,
}

impl Scoring {
    pub fn for_env(name: &str) -> Self {
        if name == "pendulum" {
            Scoring::PerStep
        } else {
            Scoring::Return
        }
    }

    fn score(self, ret: f64, steps: usize) -> f64 {
        match self {
            Scoring::PerStep => ret / steps.max(1) as f64,
            Scoring::Return => ret,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub scores: Vec<f64>,
}

impl EvalResult {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len().max(1) as f64
    }

    pub fn sd(&self) -> f64 {
        let n = self.scores.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

fn run_episode(
    env: &mut dyn VecEnv,
    seed: u64,
    mut act: impl FnMut(&[f64]) -> Result<Action>,
) -> Result<(f64, usize)> {
    let mut obs = env.reset(seed)?;
    let (mut ret, mut steps) = (0.0, 0);
    loop {
        let st = env.step(act(&obs)?)?;
        ret += st.reward;
        steps += 1;
        if st.done || st.truncated {
            return Ok((ret, steps));
        }
        obs = st.obs;
    }
}

/// Evaluate a trained policy with `mask` applied to every observation.
/// Neither the policy nor the adapter is modified.
pub fn zero_shot_eval(
    policy: &Policy,
    adapter: &Adapter,
    env: &mut dyn Env,
    mask: ModalityMask,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if policy.input_dim() != adapter.dim() {
        return Err(Error::Mismatch(format!(
            "policy reads {} inputs, adapter produces {}",
            policy.input_dim(),
            adapter.dim()
        )));
    }
    let scoring = Scoring::for_env(env.name());
    let mut venv = AdaptedEnv::evaluation(env, adapter, mask);
    let scores = (0..episodes)
        .map(|ep| {
            let (ret, steps) =
                run_episode(&mut venv, episode_seed(seed, "eval", ep as u64), |o| {
                    policy.act(o)
                })?;
            Ok(scoring.score(ret, steps))
        })
        .collect::<Result<_>>()?;
    Ok(EvalResult { scores })
}

/// Uniformly random actions on the same evaluation episodes.
pub fn random_baseline(env: &mut dyn Env, episodes: usize, seed: u64) -> Result<EvalResult> {
    let scoring = Scoring::for_env(env.name());
    let space = env.action_space();
    let mut rng = SplitRng::derive_labeled(seed, "random-policy");
    let mut scores = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        env.reset(episode_seed(seed, "eval", ep as u64))?;
        let (mut ret, mut steps) = (0.0, 0);
        loop {
            let a = match space {
                ActionSpace::Discrete(n) => Action::Discrete(rng.below(n)),
                ActionSpace::Continuous { low, high } => {
                    Action::Continuous(rng.uniform_range(low, high))
                }
            };
            let st = env.step(a)?;
            ret += st.reward;
            steps += 1;
            if st.done || st.truncated {
                break;
            }
        }
        scores.push(scoring.score(ret, steps));
    }
    Ok(EvalResult { scores })
}

pub const RESULTS_HEADER: &str = "agent_kind,modality_mask,seed,episode,reward";

pub fn results_rows(out: &mut String, agent_kind: &str, mask: &str, seed: u64, scores: &[f64]) {
    for (ep, s) in scores.iter().enumerate() {
        let _ = writeln!(out, "{agent_kind},{mask},{seed},{ep},{s}");
    }
}
