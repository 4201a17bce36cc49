//! Agent hyperparameters and the trained policy container.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use muse_core::config::{join_list, Config};
use muse_core::error::{Error, Result};
use muse_core::model::checkpoint::sidecar_path;
use muse_core::nn::{Activation, Mlp};
use muse_core::params::ParamStore;
use muse_core::rng::fnv1a;
use muse_core::tensor::Tensor;
use muse_envs::Action;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Dqn,
    Ddpg,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ddpg => "ddpg",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Algorithm::Dqn),
            "ddpg" => Ok(Algorithm::Ddpg),
            other => Err(Error::config(
                "agent.algorithm",
                format!("unknown algorithm `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub steps: usize,
    pub buffer: usize,
    pub batch: usize,
    /// Environment steps of uniformly random actions before learning starts.
    pub warmup: usize,
    pub train_every: usize,
    pub hidden: Vec<usize>,
    pub grad_clip: f64,
    // dqn
    pub lr: f64,
    pub target_update: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_fraction: f64,
    // ddpg
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    /// Exploration noise sd as a fraction of the action bound, decayed
    /// linearly to `noise_floor` over training.
    pub noise_sigma: f64,
    pub noise_floor: f64,
    pub seed: u64,
}

impl AgentConfig {
    pub fn defaults(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            gamma: 0.99,
            steps: 100_000,
            buffer: 50_000,
            batch: 128,
            warmup: 1000,
            train_every: 1,
            hidden: vec![64, 64],
            grad_clip: 10.0,
            lr: 1e-3,
            target_update: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.3,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 0.005,
            noise_sigma: 0.1,
            noise_floor: 0.02,
            seed: 0,
        }
    }

    pub fn from_config(cfg: &Config, default_algorithm: Algorithm) -> Result<Self> {
        let s = "agent";
        let algorithm = cfg
            .get_or(s, "algorithm", default_algorithm.to_string())?
            .parse()?;
        let d = Self::defaults(algorithm);
        let out = Self {
            algorithm,
            gamma: cfg.get_or(s, "gamma", d.gamma)?,
            steps: cfg.get_or(s, "steps", d.steps)?,
            buffer: cfg.get_or(s, "buffer", d.buffer)?,
            batch: cfg.get_or(s, "batch", d.batch)?,
            warmup: cfg.get_or(s, "warmup", d.warmup)?,
            train_every: cfg.get_or(s, "train_every", d.train_every)?,
            hidden: cfg.get_list_or(s, "hidden", d.hidden)?,
            grad_clip: cfg.get_or(s, "grad_clip", d.grad_clip)?,
            lr: cfg.get_or(s, "lr", d.lr)?,
            target_update: cfg.get_or(s, "target_update", d.target_update)?,
            eps_start: cfg.get_or(s, "eps_start", d.eps_start)?,
            eps_end: cfg.get_or(s, "eps_end", d.eps_end)?,
            eps_fraction: cfg.get_or(s, "eps_fraction", d.eps_fraction)?,
            actor_lr: cfg.get_or(s, "actor_lr", d.actor_lr)?,
            critic_lr: cfg.get_or(s, "critic_lr", d.critic_lr)?,
            tau: cfg.get_or(s, "tau", d.tau)?,
            noise_sigma: cfg.get_or(s, "noise_sigma", d.noise_sigma)?,
            noise_floor: cfg.get_or(s, "noise_floor", d.noise_floor)?,
            seed: cfg.get_or(s, "seed", d.seed)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn write_config(&self, cfg: &mut Config) {
        let s = "agent";
        cfg.set(s, "algorithm", self.algorithm);
        cfg.set(s, "gamma", self.gamma);
        cfg.set(s, "steps", self.steps);
        cfg.set(s, "buffer", self.buffer);
        cfg.set(s, "batch", self.batch);
        cfg.set(s, "warmup", self.warmup);
        cfg.set(s, "train_every", self.train_every);
        cfg.set(s, "hidden", join_list(&self.hidden));
        cfg.set(s, "grad_clip", self.grad_clip);
        cfg.set(s, "lr", self.lr);
        cfg.set(s, "target_update", self.target_update);
        cfg.set(s, "eps_start", self.eps_start);
        cfg.set(s, "eps_end", self.eps_end);
        cfg.set(s, "eps_fraction", self.eps_fraction);
        cfg.set(s, "actor_lr", self.actor_lr);
        cfg.set(s, "critic_lr", self.critic_lr);
        cfg.set(s, "tau", self.tau);
        cfg.set(s, "noise_sigma", self.noise_sigma);
        cfg.set(s, "noise_floor", self.noise_floor);
        cfg.set(s, "seed", self.seed);
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(
                "agent.gamma",
                format!("discount must lie in [0, 1), got {}", self.gamma),
            ));
        }
        if self.batch == 0 || self.buffer < self.batch {
            return Err(Error::config(
                "agent.batch",
                "batch must be positive and no larger than the buffer",
            ));
        }
        if self.train_every == 0 || self.target_update == 0 {
            return Err(Error::config("agent.train_every", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("agent.tau", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.eps_fraction) || self.eps_end > self.eps_start {
            return Err(Error::config(
                "agent.eps_fraction",
                "need eps_fraction in [0, 1] and eps_end <= eps_start",
            ));
        }
        Ok(())
    }

    /// Linear ε schedule over the first `eps_fraction` of training.
    pub fn epsilon(&self, step: usize) -> f64 {
        let span = (self.eps_fraction * self.steps as f64).max(1.0);
        let p = (step as f64 / span).min(1.0);
        self.eps_start + p * (self.eps_end - self.eps_start)
    }

    pub fn noise_scale(&self, step: usize) -> f64 {
        let p = (step as f64 / self.steps.max(1) as f64).min(1.0);
        self.noise_floor + (1.0 - p) * (self.noise_sigma - self.noise_floor).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyHead {
    /// Argmax over per-action values.
    Greedy,
    /// `bound · tanh(out)`.
    Tanh { bound: f64 },
}

/// A deterministic policy: the network and how its output becomes an action.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    pub params: ParamStore,
    pub head: PolicyHead,
}

impl Policy {
    pub fn new(
        prefix: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        head: PolicyHead,
    ) -> Self {
        Self {
            net: Mlp::new(prefix, input, hidden, output, Activation::Relu),
            params: ParamStore::new(),
            head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act(&self, obs: &[f64]) -> Result<Action> {
        let out = self.net.eval(
            &self.params,
            &Tensor::new(vec![1, obs.len()], obs.to_vec())?,
        )?;
        Ok(match self.head {
            PolicyHead::Greedy => Action::Discrete(out.argmax_rows()[0]),
            PolicyHead::Tanh { bound } => Action::Continuous(bound * out.data()[0].tanh()),
        })
    }

    /// Parameters to `path`, architecture and head to `<path>.meta`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path)?;
        let mut cfg = Config::new();
        let s = "policy";
        cfg.set(s, "prefix", &self.net.prefix);
        cfg.set(s, "sizes", join_list(&self.net.sizes));
        match self.head {
            PolicyHead::Greedy => cfg.set(s, "head", "greedy"),
            PolicyHead::Tanh { bound } => {
                cfg.set(s, "head", "tanh");
                cfg.set(s, "bound", bound);
            }
        }
        cfg.set(s, "fingerprint", format!("{:016x}", self.fingerprint()));
        let side = sidecar_path(path);
        std::fs::write(&side, cfg.to_text()).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Config::load(&sidecar_path(path))?;
        let s = "policy";
        let prefix: String = cfg.require(s, "prefix")?;
        let sizes: Vec<usize> = cfg.get_list(s, "sizes")?.unwrap_or_default();
        if sizes.len() < 2 {
            return Err(Error::Mismatch(
                "policy sidecar lists fewer than two layer sizes".into(),
            ));
        }
        let head = match cfg.require::<String>(s, "head")?.as_str() {
            "greedy" => PolicyHead::Greedy,
            "tanh" => PolicyHead::Tanh {
                bound: cfg.require(s, "bound")?,
            },
            other => return Err(Error::Mismatch(format!("unknown policy head `{other}`"))),
        };
        let want: Option<String> = cfg.get(s, "fingerprint")?;
        let (input, output) = (sizes[0], sizes[sizes.len() - 1]);
        let mut p = Policy::new(&prefix, input, &sizes[1..sizes.len() - 1], output, head);
        p.params = ParamStore::load(path)?;
        let mut template = ParamStore::new();
        p.net
            .init(&mut template, &mut muse_core::rng::SplitRng::new(0))?;
        let shapes = |ps: &ParamStore| {
            ps.iter()
                .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        if shapes(&template) != shapes(&p.params) {
            return Err(Error::Mismatch(
                "policy parameters do not fit the recorded architecture".into(),
            ));
        }
        if let Some(f) = want {
            let got = format!("{:016x}", p.fingerprint());
            if f != got {
                return Err(Error::Mismatch(format!(
                    "policy fingerprint {got} differs from sidecar {f}"
                )));
            }
        }
        Ok(p)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut bytes = self.params.fingerprint().to_le_bytes().to_vec();
        if let PolicyHead::Tanh { bound } = self.head {
            bytes.extend(bound.to_le_bytes());
        }
        fnv1a(&bytes)
    }
}

/// `θ' ← τ θ + (1 − τ) θ'` for every parameter of `online`.
pub fn soft_update(target: &mut ParamStore, online: &ParamStore, tau: f64) -> Result<()> {
    for (name, v) in online.iter() {
        let t = target.value(name)?;
        let data = t
            .data()
            .iter()
            .zip(v.data())
            .map(|(a, b)| (1.0 - tau) * a + tau * b)
            .collect();
        target.set_value(name, Tensor::new(v.shape().to_vec(), data)?)?;
    }
    Ok(())
}

/// Rows of `[B, d]` from stored single-precision observations.
pub fn stack_f32<'a>(rows: impl Iterator<Item = &'a [f32]>, dim: usize) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != dim {
            return Err(Error::shape(
                "replay batch",
                format!("row of length {} in a batch of width {dim}", r.len()),
            ));
        }
        data.extend(r.iter().map(|&v| v as f64));
        n += 1;
    }
    Tensor::new(vec![n, dim], data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    pub ret: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeRecord>,
    pub updates: usize,
}
