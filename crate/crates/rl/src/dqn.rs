//! Deep Q-learning with uniform replay and hard target updates.

use muse_core::autodiff::{Graph, NodeId};
use muse_core::error::{Error, Result};
use muse_core::params::{clip_global_norm, AdamConfig, ParamStore};
use muse_core::rng::SplitRng;
use muse_core::tensor::Tensor;
use muse_envs::{Action, ActionSpace};

use crate::agent::{stack_f32, AgentConfig, EpisodeRecord, Policy, PolicyHead, TrainReport};
use crate::buffer::{obs_vec, ReplayBuffer, Transition};
use crate::episode_seed;
use crate::vecenv::VecEnv;

pub const DIVERGENCE: f64 = 1e6;

/// `r + γ · max q_next`, or `r` on a terminal transition.
pub fn q_target(reward: f64, q_next: &[f64], gamma: f64, done: bool) -> f64 {
    if done || q_next.is_empty() {
        reward
    } else {
        reward + gamma * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn new_q_policy(obs_dim: usize, actions: usize, cfg: &AgentConfig) -> Result<Policy> {
    let mut p = Policy::new("q", obs_dim, &cfg.hidden, actions, PolicyHead::Greedy);
    p.net.init(
        &mut p.params,
        &mut SplitRng::derive_labeled(cfg.seed, "dqn/init"),
    )?;
    Ok(p)
}

/// Squared TD error of a batch against precomputed targets: `½ mean (Q(s,a) − y)²`.
/// Returns the graph, the loss, and the `[B, A]` Q-value node.
pub fn td_loss_graph(
    policy: &Policy,
    obs: Tensor,
    actions: &[usize],
    targets: Vec<f64>,
) -> Result<(Graph, NodeId, NodeId)> {
    let n_act = policy.net.output_dim();
    let b = obs.rows();
    let mut onehot = vec![0.0; b * n_act];
    for (i, &a) in actions.iter().enumerate() {
        onehot[i * n_act + a] = 1.0;
    }
    let mut g = Graph::new();
    let x = g.input("obs", obs);
    let y = g.input("target", Tensor::new(vec![b], targets)?);
    let sel = g.constant(Tensor::new(vec![b, n_act], onehot)?);
    let q = policy.net.forward(&mut g, &policy.params, x)?;
    let qa = g.mul(q, sel)?;
    let qa = g.sum_last(qa)?;
    let d = g.sub(qa, y)?;
    let d2 = g.square(d)?;
    let m = g.mean(d2, None)?;
    let loss = g.scale(m, 0.5)?;
    Ok((g, loss, q))
}

fn check_q(t: &Tensor, at: usize) -> Result<()> {
    let m = t.max_abs();
    if !m.is_finite() || m > DIVERGENCE {
        return Err(Error::Diverged {
            at: format!("dqn update {at}"),
            detail: format!("|Q| reached {m:e}"),
        });
    }
    Ok(())
}

pub fn train_dqn(env: &mut dyn VecEnv, cfg: &AgentConfig) -> Result<(Policy, TrainReport)> {
    cfg.validate()?;
    let ActionSpace::Discrete(n_act) = env.action_space() else {
        return Err(Error::contract("DQN needs a discrete action space"));
    };
    let dim = env.obs_dim();
    let mut policy = new_q_policy(dim, n_act, cfg)?;
    let mut target: ParamStore = policy.params.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer)?;
    let mut explore = SplitRng::derive_labeled(cfg.seed, "dqn/explore");
    let mut replay = SplitRng::derive_labeled(cfg.seed, "dqn/replay");
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut report = TrainReport::default();

    let mut episode = 0;
    let mut obs = obs_vec(&env.reset(episode_seed(cfg.seed, "train", 0))?);
    let mut obs64 = obs.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let (mut ret, mut len) = (0.0, 0);
    for t in 0..cfg.steps {
        let a = if t < cfg.warmup || explore.uniform() < cfg.epsilon(t) {
            explore.below(n_act)
        } else {
            match policy.act(&obs64)? {
                Action::Discrete(a) => a,
                Action::Continuous(_) => unreachable!("greedy head"),
            }
        };
        let st = env.step(Action::Discrete(a))?;
        let next = obs_vec(&st.obs);
        buffer.push(Transition {
            obs: obs.clone(),
            action: a,
            reward: st.reward,
            next_obs: next.clone(),
            done: st.done,
        })?;
        ret += st.reward;
        len += 1;
        if st.done || st.truncated {
            report.episodes.push(EpisodeRecord {
                episode,
                steps: len,
                ret,
            });
            episode += 1;
            (ret, len) = (0.0, 0);
            obs = obs_vec(&env.reset(episode_seed(cfg.seed, "train", episode as u64))?);
            obs64 = obs.iter().map(|&v| v as f64).collect();
        } else {
            obs = next;
            obs64 = st.obs;
        }

        if t >= cfg.warmup && buffer.len() >= cfg.batch && t % cfg.train_every == 0 {
            let batch = buffer.sample(cfg.batch, &mut replay)?;
            let s = stack_f32(batch.iter().map(|t| &t.obs[..]), dim)?;
            let s2 = stack_f32(batch.iter().map(|t| &t.next_obs[..]), dim)?;
            let q_next = policy.net.eval(&target, &s2)?;
            check_q(&q_next, report.updates)?;
            let y: Vec<f64> = batch
                .iter()
                .enumerate()
                .map(|(i, tr)| q_target(tr.reward, q_next.row(i), cfg.gamma, tr.done))
                .collect();
            let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
            let (g, loss, q) = td_loss_graph(&policy, s, &actions, y)?;
            check_q(g.value(q), report.updates)?;
            let mut grads = g.backward(loss)?.into_param_map();
            if cfg.grad_clip > 0.0 {
                clip_global_norm(&mut grads, cfg.grad_clip);
            }
            policy
                .params
                .adam_step(grads.iter().map(|(k, v)| (k.as_str(), v)), &adam)?;
            report.updates += 1;
        }
        if (t + 1) % cfg.target_update == 0 {
            target = policy.params.clone();
        }
    }
    if !policy.params.is_finite() {
        return Err(Error::Diverged {
            at: "dqn".into(),
            detail: "non-finite Q-network parameters".into(),
        });
    }
    Ok((policy, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_cases() {
        assert_eq!(q_target(-1.0, &[5.0, 3.0], 0.9, true), -1.0);
        assert!((q_target(0.0, &[10.0, 2.0], 0.9, false) - 9.0).abs() < 1e-12);
        assert_eq!(q_target(0.5, &[100.0], 0.0, false), 0.5);
    }
}
