//! train-agent and eval-agent.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use muse_core::config::Config;
use muse_core::error::{Error, Result};
use muse_core::model::{checkpoint, MuseModel};
use muse_envs::ModalityMask;
use muse_rl::adapter::{Adapter, AdapterKind, SoundNorm};
use muse_rl::agent::{AgentConfig, Algorithm, Policy};
use muse_rl::eval::{random_baseline, results_rows, zero_shot_eval, Scoring, RESULTS_HEADER};
use muse_rl::representation::{collect_frames, EnvConfigs, EnvKind, RepresentationConfig};
use muse_rl::vecenv::AdaptedEnv;
use muse_rl::{ddpg, dqn};

use crate::data::{load_checkpoint, norm_path, read_norm};
use crate::run::{write, Job, Outcome, MANIFEST};

const POLICY: &str = "policy.bin";
const NORM: &str = "adapter.norm";
const REPRESENTATION: &str = "representation.bin";

fn env_and_adapter(cfg: &Config) -> Result<(EnvKind, EnvConfigs, AdapterKind)> {
    let kind: EnvKind = cfg.get_or("env", "name", "pendulum".to_string())?.parse()?;
    let envs = EnvConfigs::from_config(cfg, kind)?;
    let adapter: AdapterKind = cfg
        .get_or("agent", "adapter", AdapterKind::RawFusion.to_string())?
        .parse()?;
    Ok((kind, envs, adapter))
}

fn image_dim(kind: EnvKind, envs: &EnvConfigs) -> usize {
    let side = match kind {
        EnvKind::Pendulum => envs.pendulum.image_size,
        EnvKind::Hyperhot => envs.hyperhot.image_size,
    };
    side * side
}

fn check_fits(adapter: &Adapter, kind: EnvKind, envs: &EnvConfigs) -> Result<()> {
    let (img, snd) = match kind {
        EnvKind::Pendulum => (image_dim(kind, envs), envs.pendulum.sound_dim()),
        EnvKind::Hyperhot => (image_dim(kind, envs), envs.hyperhot.sound_dim()),
    };
    if adapter.image_dim != img || adapter.norm.dim() != snd {
        return Err(Error::Mismatch(format!(
            "adapter takes image {} and sound {}, {kind} emits {img} and {snd}",
            adapter.image_dim,
            adapter.norm.dim()
        )));
    }
    Ok(())
}

enum AdapterSource {
    Checkpoint(PathBuf),
    Frames(RepresentationConfig),
}

struct TrainAgent {
    kind: EnvKind,
    envs: EnvConfigs,
    adapter: AdapterKind,
    source: AdapterSource,
    agent: AgentConfig,
}

pub fn train_agent(cfg: &mut Config, seed: u64) -> Result<Box<dyn Job>> {
    let (kind, envs, adapter) = env_and_adapter(cfg)?;
    let checkpoint: Option<String> = cfg.get("adapter", "checkpoint")?;
    let source = match (checkpoint, adapter.variant()) {
        (Some(p), _) => AdapterSource::Checkpoint(p.into()),
        (None, None) => AdapterSource::Frames(RepresentationConfig::from_config(cfg, kind)?),
        (None, Some(_)) => {
            return Err(Error::Mismatch(format!(
                "the {adapter} adapter needs a trained representation: set [adapter] checkpoint"
            )))
        }
    };
    if !cfg.has("agent", "seed") {
        cfg.set("agent", "seed", seed);
    }
    let default_algo = match kind {
        EnvKind::Pendulum => Algorithm::Ddpg,
        EnvKind::Hyperhot => Algorithm::Dqn,
    };
    let agent = AgentConfig::from_config(cfg, default_algo)?;
    Ok(Box::new(TrainAgent {
        kind,
        envs,
        adapter,
        source,
        agent,
    }))
}

impl Job for TrainAgent {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome> {
        let seed = self.agent.seed;
        let mut model: Option<(MuseModel, u64)> = None;
        let norm = match &self.source {
            AdapterSource::Checkpoint(p) => {
                let norm = read_norm(&norm_path(p))?;
                if self.adapter.variant().is_some() {
                    model = Some(load_checkpoint(p)?);
                }
                norm
            }
            AdapterSource::Frames(rc) => {
                let (_, sound) = collect_frames(self.kind, &self.envs, rc.frames.max(1), seed)?;
                SoundNorm::fit(&sound)?
            }
        };
        let adapter = match &model {
            Some((m, _)) => Adapter::latent(self.adapter, m.clone(), norm)?,
            None => Adapter::raw(self.adapter, image_dim(self.kind, &self.envs), norm)?,
        };
        check_fits(&adapter, self.kind, &self.envs)?;

        let mut env = self.envs.make(self.kind)?;
        let (policy, report) = {
            let mut venv = AdaptedEnv::training(env.as_mut(), &adapter, seed);
            match self.agent.algorithm {
                Algorithm::Ddpg => ddpg::train_ddpg(&mut venv, &self.agent)?,
                Algorithm::Dqn => dqn::train_dqn(&mut venv, &self.agent)?,
            }
        };
        policy.save(&out.join(POLICY))?;
        write(&out.join(NORM), adapter.norm.to_text())?;
        if let Some((m, s)) = &model {
            checkpoint::save(m, &out.join(REPRESENTATION), *s)?;
        }
        let scoring = Scoring::for_env(env.name());
        let mut curve = String::from("episode,steps,return,score\n");
        for e in &report.episodes {
            let score = match scoring {
                Scoring::PerStep => e.ret / e.steps.max(1) as f64,
                Scoring::Return => e.ret,
            };
            let _ = writeln!(curve, "{},{},{},{score}", e.episode, e.steps, e.ret);
        }
        write(&out.join("learning_curve.csv"), curve)?;
        println!(
            "{} episodes, {} updates",
            report.episodes.len(),
            report.updates
        );
        Ok(Outcome::Success)
    }
}

struct EvalAgent {
    dir: PathBuf,
    masks: Vec<ModalityMask>,
    episodes: usize,
    seeds: Vec<u64>,
    random: bool,
}

pub fn eval_agent(cfg: &mut Config, seed: u64) -> Result<Box<dyn Job>> {
    let s = "eval";
    let dir: String = cfg.require(s, "agent")?;
    let names: Vec<String> = cfg.get_list_or(
        s,
        "masks",
        vec!["joint".into(), "image".into(), "sound".into()],
    )?;
    let masks = names
        .iter()
        .map(|n| match n.parse::<ModalityMask>() {
            Ok(m) if m.any() => Ok(m),
            Ok(_) => Err(Error::config(
                "eval.masks",
                "the empty mask leaves nothing to observe",
            )),
            Err(_) => Err(Error::config(
                "eval.masks",
                format!("unknown mask `{n}`: observations carry image and sound only"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    if masks.is_empty() {
        return Err(Error::config("eval.masks", "no masks requested"));
    }
    let episodes: usize = cfg.get_or(s, "episodes", 20)?;
    if episodes == 0 {
        return Err(Error::config("eval.episodes", "must be positive"));
    }
    let seeds: Vec<u64> = cfg.get_list_or(s, "seeds", vec![seed])?;
    if seeds.is_empty() {
        return Err(Error::config("eval.seeds", "no evaluation seeds"));
    }
    Ok(Box::new(EvalAgent {
        dir: dir.into(),
        masks,
        episodes,
        seeds,
        random: cfg.get_or(s, "random_baseline", false)?,
    }))
}

impl Job for EvalAgent {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome> {
        let manifest = self.dir.join(MANIFEST);
        if !manifest.is_file() {
            return Err(Error::config(
                "eval.agent",
                format!("{} is not a train-agent output", self.dir.display()),
            ));
        }
        let train = Config::load(&manifest)?;
        if train.get_str("run", "command").as_deref() != Some("train-agent") {
            return Err(Error::Mismatch(format!(
                "{} was not written by train-agent",
                self.dir.display()
            )));
        }
        let (kind, envs, adapter_kind) = env_and_adapter(&train)?;
        let norm = read_norm(&self.dir.join(NORM))?;
        let adapter = match adapter_kind.variant() {
            Some(_) => Adapter::latent(
                adapter_kind,
                checkpoint::load(&self.dir.join(REPRESENTATION))?.0,
                norm,
            )?,
            None => Adapter::raw(adapter_kind, image_dim(kind, &envs), norm)?,
        };
        check_fits(&adapter, kind, &envs)?;
        let policy = Policy::load(&self.dir.join(POLICY))?;
        let mut env = envs.make(kind)?;

        let mut results = format!("{RESULTS_HEADER}\n");
        let mut summary = String::from("agent_kind,modality_mask,seed,episodes,mean,sd\n");
        let agent = adapter_kind.to_string();
        for &seed in &self.seeds {
            for &mask in &self.masks {
                let r = zero_shot_eval(&policy, &adapter, env.as_mut(), mask, self.episodes, seed)?;
                results_rows(&mut results, &agent, &mask.to_string(), seed, &r.scores);
                let _ = writeln!(
                    summary,
                    "{agent},{mask},{seed},{},{},{}",
                    self.episodes,
                    r.mean(),
                    r.sd()
                );
                println!(
                    "{agent:<20} {mask:<6} seed {seed}: {:.4} ± {:.4}",
                    r.mean(),
                    r.sd()
                );
            }
        }
        write(&out.join("results.csv"), results)?;
        write(&out.join("summary.csv"), summary)?;
        if self.random {
            let mut rows = format!("{RESULTS_HEADER}\n");
            for &seed in &self.seeds {
                let r = random_baseline(env.as_mut(), self.episodes, seed)?;
                results_rows(&mut rows, "random", "joint", seed, &r.scores);
                println!(
                    "{:<20} joint  seed {seed}: {:.4} ± {:.4}",
                    "random",
                    r.mean(),
                    r.sd()
                );
            }
            write(&out.join("random.csv"), rows)?;
        }
        Ok(Outcome::Success)
    }
}
