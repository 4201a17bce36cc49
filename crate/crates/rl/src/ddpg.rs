//! Deterministic policy gradient with soft-updated target networks.

use muse_core::autodiff::{Graph, NodeId};
use muse_core::error::{Error, Result};
use muse_core::nn::{Activation, Mlp};
use muse_core::params::{clip_global_norm, AdamConfig, ParamStore};
use muse_core::rng::SplitRng;
use muse_core::tensor::Tensor;
use muse_envs::{Action, ActionSpace};

use crate::agent::{
    soft_update, stack_f32, AgentConfig, EpisodeRecord, Policy, PolicyHead, TrainReport,
};
use crate::buffer::{obs_vec, ReplayBuffer, Transition};
use crate::dqn::DIVERGENCE;
use crate::episode_seed;
use crate::vecenv::VecEnv;

pub struct Critic {
    pub net: Mlp,
    pub params: ParamStore,
}

impl Critic {
    pub fn new(obs_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let net = Mlp::new("critic", obs_dim + 1, hidden, 1, Activation::Relu);
        let mut params = ParamStore::new();
        net.init(
            &mut params,
            &mut SplitRng::derive_labeled(seed, "ddpg/critic"),
        )?;
        Ok(Self { net, params })
    }

    /// `Q(s, a)` as a `[B]` vector.
    pub fn eval(&self, params: &ParamStore, s: &Tensor, a: &[f64]) -> Result<Vec<f64>> {
        let x = concat_action(s, a)?;
        Ok(self.net.eval(params, &x)?.into_data())
    }
}

fn concat_action(s: &Tensor, a: &[f64]) -> Result<Tensor> {
    let d = s.row_len();
    let mut data = Vec::with_capacity(s.rows() * (d + 1));
    for (i, &ai) in a.iter().enumerate() {
        data.extend_from_slice(s.row(i));
        data.push(ai);
    }
    Tensor::new(vec![s.rows(), d + 1], data)
}

pub fn new_actor(obs_dim: usize, bound: f64, cfg: &AgentConfig) -> Result<Policy> {
    let mut p = Policy::new("actor", obs_dim, &cfg.hidden, 1, PolicyHead::Tanh { bound });
    p.net.init(
        &mut p.params,
        &mut SplitRng::derive_labeled(cfg.seed, "ddpg/actor"),
    )?;
    Ok(p)
}

fn actor_actions(actor: &Policy, params: &ParamStore, s: &Tensor) -> Result<Vec<f64>> {
    let PolicyHead::Tanh { bound } = actor.head else {
        return Err(Error::contract("actor needs a tanh head"));
    };
    Ok(actor
        .net
        .eval(params, s)?
        .data()
        .iter()
        .map(|v| bound * v.tanh())
        .collect())
}

/// `½ mean (Q(s,a) − y)²` over a batch.
pub fn critic_loss_graph(
    critic: &Critic,
    s: &Tensor,
    a: &[f64],
    y: Vec<f64>,
) -> Result<(Graph, NodeId, NodeId)> {
    let b = s.rows();
    let mut g = Graph::new();
    let x = g.input("obs_action", concat_action(s, a)?);
    let yt = g.input("target", Tensor::new(vec![b, 1], y)?);
    let q = critic.net.forward(&mut g, &critic.params, x)?;
    let d = g.sub(q, yt)?;
    let d2 = g.square(d)?;
    let m = g.mean(d2, None)?;
    let loss = g.scale(m, 0.5)?;
    Ok((g, loss, q))
}

/// `−mean Q(s, bound·tanh(actor(s)))`; only the actor's gradients are used.
pub fn actor_loss_graph(actor: &Policy, critic: &Critic, s: Tensor) -> Result<(Graph, NodeId)> {
    let PolicyHead::Tanh { bound } = actor.head else {
        return Err(Error::contract("actor needs a tanh head"));
    };
    let mut g = Graph::new();
    let x = g.input("obs", s);
    let h = actor.net.forward(&mut g, &actor.params, x)?;
    let t = g.tanh(h)?;
    let a = g.scale(t, bound)?;
    let sa = g.concat(&[x, a])?;
    let q = critic.net.forward(&mut g, &critic.params, sa)?;
    let m = g.mean(q, None)?;
    let loss = g.neg(m)?;
    Ok((g, loss))
}

fn check_q(q: &[f64], at: usize) -> Result<()> {
    let m = q.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !m.is_finite() || m > DIVERGENCE {
        return Err(Error::Diverged {
            at: format!("ddpg update {at}"),
            detail: format!("|Q| reached {m:e}"),
        });
    }
    Ok(())
}

pub fn train_ddpg(env: &mut dyn VecEnv, cfg: &AgentConfig) -> Result<(Policy, TrainReport)> {
    cfg.validate()?;
    let ActionSpace::Continuous { low, high } = env.action_space() else {
        return Err(Error::contract("DDPG needs a continuous action space"));
    };
    if low != -high {
        return Err(Error::contract("DDPG expects a symmetric action range"));
    }
    let dim = env.obs_dim();
    let mut actor = new_actor(dim, high, cfg)?;
    let mut critic = Critic::new(dim, &cfg.hidden, cfg.seed)?;
    let mut actor_target = actor.params.clone();
    let mut critic_target = critic.params.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer)?;
    let mut explore = SplitRng::derive_labeled(cfg.seed, "ddpg/explore");
    let mut replay = SplitRng::derive_labeled(cfg.seed, "ddpg/replay");
    let (actor_adam, critic_adam) = (
        AdamConfig::with_lr(cfg.actor_lr),
        AdamConfig::with_lr(cfg.critic_lr),
    );
    let mut report = TrainReport::default();

    let mut episode = 0;
    let mut obs64 = env.reset(episode_seed(cfg.seed, "train", 0))?;
    let mut obs = obs_vec(&obs64);
    let (mut ret, mut len) = (0.0, 0);
    for t in 0..cfg.steps {
        let u = if t < cfg.warmup {
            explore.uniform_range(low, high)
        } else {
            let Action::Continuous(u) = actor.act(&obs64)? else {
                unreachable!("tanh head")
            };
            (u + cfg.noise_scale(t) * high * explore.normal()).clamp(low, high)
        };
        let st = env.step(Action::Continuous(u))?;
        let next = obs_vec(&st.obs);
        buffer.push(Transition {
            obs: obs.clone(),
            action: u,
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
            obs64 = env.reset(episode_seed(cfg.seed, "train", episode as u64))?;
            obs = obs_vec(&obs64);
        } else {
            obs = next;
            obs64 = st.obs;
        }

        if t >= cfg.warmup && buffer.len() >= cfg.batch && t % cfg.train_every == 0 {
            let batch = buffer.sample(cfg.batch, &mut replay)?;
            let s = stack_f32(batch.iter().map(|t| &t.obs[..]), dim)?;
            let s2 = stack_f32(batch.iter().map(|t| &t.next_obs[..]), dim)?;
            let a: Vec<f64> = batch.iter().map(|t| t.action).collect();
            let a2 = actor_actions(&actor, &actor_target, &s2)?;
            let q2 = critic.eval(&critic_target, &s2, &a2)?;
            check_q(&q2, report.updates)?;
            let y: Vec<f64> = batch
                .iter()
                .zip(&q2)
                .map(|(tr, q)| {
                    if tr.done {
                        tr.reward
                    } else {
                        tr.reward + cfg.gamma * q
                    }
                })
                .collect();

            let (g, loss, _) = critic_loss_graph(&critic, &s, &a, y)?;
            let mut grads = g.backward(loss)?.into_param_map();
            if cfg.grad_clip > 0.0 {
                clip_global_norm(&mut grads, cfg.grad_clip);
            }
            critic
                .params
                .adam_step(grads.iter().map(|(k, v)| (k.as_str(), v)), &critic_adam)?;

            let (g, loss) = actor_loss_graph(&actor, &critic, s)?;
            let mut grads = g.backward(loss)?.into_param_map();
            grads.retain(|k, _| k.starts_with("actor/"));
            if cfg.grad_clip > 0.0 {
                clip_global_norm(&mut grads, cfg.grad_clip);
            }
            actor
                .params
                .adam_step(grads.iter().map(|(k, v)| (k.as_str(), v)), &actor_adam)?;

            soft_update(&mut actor_target, &actor.params, cfg.tau)?;
            soft_update(&mut critic_target, &critic.params, cfg.tau)?;
            report.updates += 1;
        }
    }
    if !(actor.params.is_finite() && critic.params.is_finite()) {
        return Err(Error::Diverged {
            at: "ddpg".into(),
            detail: "non-finite actor or critic parameters".into(),
        });
    }
    Ok((actor, report))
}
