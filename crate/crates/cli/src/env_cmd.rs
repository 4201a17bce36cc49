//! env: roll out an environment under a simple policy and dump what it emits.

use std::fmt::Write as _;
use std::path::Path;

use muse_core::config::Config;
use muse_core::error::{Error, Result};
use muse_core::rng::SplitRng;
use muse_envs::dump::{frame_pgm, waveform_csv};
use muse_envs::hyperhot::{self, Hyperhot};
use muse_envs::pendulum::{self, Pendulum};
use muse_envs::{Action, ActionSpace, Env, Observation};
use muse_rl::representation::{EnvConfigs, EnvKind};

use crate::run::{write, Job, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RolloutPolicy {
    Random,
    Scripted,
    Idle,
}

struct EnvRollout {
    kind: EnvKind,
    envs: EnvConfigs,
    steps: usize,
    policy: RolloutPolicy,
    waveforms: bool,
    seed: u64,
}

pub fn env(cfg: &mut Config, seed: u64) -> Result<Box<dyn Job>> {
    let s = "env";
    let kind: EnvKind = cfg.require::<String>(s, "name")?.parse()?;
    let policy = match cfg.get_or(s, "policy", "random".to_string())?.as_str() {
        "random" => RolloutPolicy::Random,
        "scripted" => RolloutPolicy::Scripted,
        "idle" => RolloutPolicy::Idle,
        other => {
            return Err(Error::config(
                "env.policy",
                format!("unknown policy `{other}` (random, scripted, idle)"),
            ))
        }
    };
    let steps: usize = cfg.get_or(s, "steps", 200)?;
    let waveforms = kind == EnvKind::Hyperhot && cfg.get_or(s, "waveforms", false)?;
    Ok(Box::new(EnvRollout {
        kind,
        envs: EnvConfigs::from_config(cfg, kind)?,
        steps,
        policy,
        waveforms,
        seed,
    }))
}

enum Concrete {
    Pendulum(Pendulum),
    Hyperhot(Hyperhot),
}

impl Concrete {
    fn env(&mut self) -> &mut dyn Env {
        match self {
            Concrete::Pendulum(e) => e,
            Concrete::Hyperhot(e) => e,
        }
    }

    fn scripted(&self) -> Action {
        match self {
            Concrete::Pendulum(e) => {
                Action::Continuous(pendulum::scripted_torque(&e.cfg, &e.state))
            }
            Concrete::Hyperhot(e) => Action::Discrete(hyperhot::scripted_action(&e.cfg, &e.state)),
        }
    }
}

impl Job for EnvRollout {
    fn execute(self: Box<Self>, out: &Path) -> Result<Outcome> {
        let mut env = match self.kind {
            EnvKind::Pendulum => Concrete::Pendulum(Pendulum::new(self.envs.pendulum.clone())?),
            EnvKind::Hyperhot => Concrete::Hyperhot(Hyperhot::new(self.envs.hyperhot.clone())?),
        };
        let mut rng = SplitRng::derive_labeled(self.seed, "env/policy");
        let first = env.env().reset(self.seed)?;
        let side = env.env().image_side();
        let mut sound = String::from("step");
        for j in 0..first.sound.len() {
            let _ = write!(sound, ",s{j}");
        }
        sound.push('\n');
        let mut rewards = String::from("step,reward,done,truncated\n");
        let mut total = 0.0;
        let mut taken = 0;
        for t in 0..self.steps {
            let action = match (self.policy, env.env().action_space()) {
                (RolloutPolicy::Scripted, _) => env.scripted(),
                (RolloutPolicy::Random, ActionSpace::Discrete(n)) => Action::Discrete(rng.below(n)),
                (RolloutPolicy::Random, ActionSpace::Continuous { low, high }) => {
                    Action::Continuous(rng.uniform_range(low, high))
                }
                (RolloutPolicy::Idle, ActionSpace::Discrete(_)) => Action::Discrete(hyperhot::NOOP),
                (RolloutPolicy::Idle, ActionSpace::Continuous { .. }) => Action::Continuous(0.0),
            };
            let st = env.env().step(action)?;
            dump_frame(out, t, &st.obs, side)?;
            let _ = write!(sound, "{t}");
            for v in &st.obs.sound {
                let _ = write!(sound, ",{v}");
            }
            sound.push('\n');
            let _ = writeln!(
                rewards,
                "{t},{},{},{}",
                st.reward,
                u8::from(st.done),
                u8::from(st.truncated)
            );
            if self.waveforms {
                if let Concrete::Hyperhot(e) = &env {
                    let w = hyperhot::waveforms(&e.cfg, &e.state.emitters(), &e.cfg.receivers);
                    write(
                        &out.join("waveforms").join(format!("step_{t:04}.csv")),
                        waveform_csv(&w),
                    )?;
                }
            }
            total += st.reward;
            taken += 1;
            if st.done || st.truncated {
                break;
            }
        }
        write(&out.join("sound.csv"), sound)?;
        write(&out.join("rewards.csv"), rewards)?;
        println!("{} steps, return {total}", taken);
        Ok(Outcome::Success)
    }
}

fn dump_frame(out: &Path, t: usize, obs: &Observation, side: usize) -> Result<()> {
    write(
        &out.join("frames").join(format!("frame_{t:04}.pgm")),
        frame_pgm(&obs.image, side),
    )
}
