//! Inverted pendulum. `θ = 0` is upright; the rod tip sits at
//! `l·(sin θ, cos θ)` relative to the pivot and emits a constant tone.

use std::f64::consts::PI;

use muse_core::config::Config;
use muse_core::error::{Error, Result};
use muse_core::raster;
use muse_core::rng::SplitRng;

use crate::sound::{doppler_frequency, inverse_square_amplitude, Vec2};
use crate::{Action, ActionSpace, Env, ModalityMask, Observation, Step};

#[derive(Clone, Debug, PartialEq)]
pub struct PendulumConfig {
    pub g: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub episode_steps: usize,
    pub image_size: usize,
    pub f0: f64,
    pub speed_of_sound: f64,
    pub k: f64,
    pub receivers: Vec<Vec2>,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            g: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            episode_steps: 200,
            image_size: 32,
            f0: 440.0,
            speed_of_sound: 20.0,
            k: 1.0,
            receivers: vec![(-1.5, 0.0), (1.5, 0.0)],
        }
    }
}

fn parse_points(key: &str, v: &[f64]) -> Result<Vec<Vec2>> {
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(Error::config(key, "expected a non-empty list of x,y pairs"));
    }
    Ok(v.chunks(2).map(|p| (p[0], p[1])).collect())
}

pub(crate) fn flatten_points(p: &[Vec2]) -> Vec<f64> {
    p.iter().flat_map(|&(x, y)| [x, y]).collect()
}

impl PendulumConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let s = "pendulum";
        let out = Self {
            g: cfg.get_or(s, "g", d.g)?,
            mass: cfg.get_or(s, "mass", d.mass)?,
            length: cfg.get_or(s, "length", d.length)?,
            dt: cfg.get_or(s, "dt", d.dt)?,
            max_torque: cfg.get_or(s, "max_torque", d.max_torque)?,
            max_speed: cfg.get_or(s, "max_speed", d.max_speed)?,
            episode_steps: cfg.get_or(s, "episode_steps", d.episode_steps)?,
            image_size: cfg.get_or(s, "image_size", d.image_size)?,
            f0: cfg.get_or(s, "f0", d.f0)?,
            speed_of_sound: cfg.get_or(s, "speed_of_sound", d.speed_of_sound)?,
            k: cfg.get_or(s, "k", d.k)?,
            receivers: parse_points(
                "pendulum.receivers",
                &cfg.get_list_or(s, "receivers", flatten_points(&d.receivers))?,
            )?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |k: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("pendulum.{k}"), "must be positive"))
            }
        };
        pos("g", self.g)?;
        pos("mass", self.mass)?;
        pos("length", self.length)?;
        pos("dt", self.dt)?;
        pos("max_speed", self.max_speed)?;
        pos("speed_of_sound", self.speed_of_sound)?;
        if self.image_size < 8 {
            return Err(Error::config("pendulum.image_size", "must be at least 8"));
        }
        for r in &self.receivers {
            if (r.0 * r.0 + r.1 * r.1).sqrt() <= self.length {
                return Err(Error::config(
                    "pendulum.receivers",
                    "receivers must lie outside the rod's reach",
                ));
            }
        }
        if self.max_speed * self.length >= self.speed_of_sound {
            return Err(Error::config(
                "pendulum.speed_of_sound",
                "rod tip could outrun its own sound",
            ));
        }
        Ok(())
    }

    pub fn sound_dim(&self) -> usize {
        2 * self.receivers.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
    pub steps: usize,
}

/// Wrap into `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// One semi-implicit Euler step. The reward is charged on the state the
/// torque is applied in.
pub fn pendulum_step(cfg: &PendulumConfig, s: PendulumState, torque: f64) -> (PendulumState, f64) {
    let u = torque.clamp(-cfg.max_torque, cfg.max_torque);
    let th = wrap_angle(s.theta);
    let reward = -(th * th + 0.1 * s.theta_dot * s.theta_dot + 0.001 * u * u);
    let acc = 3.0 * cfg.g / (2.0 * cfg.length) * s.theta.sin()
        + 3.0 / (cfg.mass * cfg.length * cfg.length) * u;
    let theta_dot = (s.theta_dot + acc * cfg.dt).clamp(-cfg.max_speed, cfg.max_speed);
    let theta = wrap_angle(s.theta + theta_dot * cfg.dt);
    (
        PendulumState {
            theta,
            theta_dot,
            steps: s.steps + 1,
        },
        reward,
    )
}

pub fn tip(cfg: &PendulumConfig, s: &PendulumState) -> (Vec2, Vec2) {
    let l = cfg.length;
    let pos = (l * s.theta.sin(), l * s.theta.cos());
    let vel = (
        l * s.theta_dot * s.theta.cos(),
        -l * s.theta_dot * s.theta.sin(),
    );
    (pos, vel)
}

pub fn render(cfg: &PendulumConfig, s: &PendulumState) -> Vec<f64> {
    let n = cfg.image_size;
    let mut img = vec![0.0; n * n];
    let c = n as f64 / 2.0;
    let scale = 0.4 * n as f64 / cfg.length;
    let (p, _) = tip(cfg, s);
    raster::draw_segment(&mut img, n, (c, c), (c + scale * p.0, c + scale * p.1), 1.0);
    img
}

/// `(f'ᵢ / f0, aᵢ / a_max)` per receiver, where `a_max` is the amplitude at
/// the receiver's closest possible approach.
pub fn sound(cfg: &PendulumConfig, s: &PendulumState) -> Result<Vec<f64>> {
    let (p, v) = tip(cfg, s);
    let mut out = Vec::with_capacity(cfg.sound_dim());
    for &r in &cfg.receivers {
        let f = doppler_frequency(cfg.f0, p, v, r, (0.0, 0.0), cfg.speed_of_sound)?;
        let a = inverse_square_amplitude(cfg.k, p, r)?;
        let closest = (r.0 * r.0 + r.1 * r.1).sqrt() - cfg.length;
        out.push(f / cfg.f0);
        out.push(a * closest * closest / cfg.k);
    }
    Ok(out)
}

pub fn pendulum_observe(cfg: &PendulumConfig, s: &PendulumState) -> Result<Observation> {
    Ok(Observation {
        image: render(cfg, s),
        sound: sound(cfg, s)?,
        mask: ModalityMask::JOINT,
    })
}

/// Mechanical energy with upright as the zero of potential height.
pub fn energy(cfg: &PendulumConfig, s: &PendulumState) -> f64 {
    let i = cfg.mass * cfg.length * cfg.length / 3.0;
    0.5 * i * s.theta_dot * s.theta_dot
        - cfg.mass * cfg.g * cfg.length / 2.0 * (1.0 - s.theta.cos())
}

/// Energy pumping far from upright, PD balancing near it.
pub fn scripted_torque(cfg: &PendulumConfig, s: &PendulumState) -> f64 {
    let th = wrap_angle(s.theta);
    let u = if th.abs() < 0.5 {
        -(10.0 * th + 2.0 * s.theta_dot)
    } else if energy(cfg, s) < 0.0 {
        cfg.max_torque * if s.theta_dot >= 0.0 { 1.0 } else { -1.0 }
    } else {
        0.0
    };
    u.clamp(-cfg.max_torque, cfg.max_torque)
}

pub struct Pendulum {
    pub cfg: PendulumConfig,
    pub state: PendulumState,
}

impl Pendulum {
    pub fn new(cfg: PendulumConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: PendulumState {
                theta: PI,
                theta_dot: 0.0,
                steps: 0,
            },
        })
    }

    pub fn set_state(&mut self, state: PendulumState) {
        self.state = state;
    }
}

impl Env for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    /// Uniform angle and `θ̇ ∈ [−1, 1]`.
    fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = SplitRng::derive_labeled(seed, "pendulum/reset");
        self.state = PendulumState {
            theta: wrap_angle(rng.uniform_range(-PI, PI)),
            theta_dot: rng.uniform_range(-1.0, 1.0),
            steps: 0,
        };
        pendulum_observe(&self.cfg, &self.state)
    }

    fn step(&mut self, action: Action) -> Result<Step> {
        let u = match action {
            Action::Continuous(u) if u.is_finite() => u,
            other => {
                return Err(Error::contract(format!(
                    "pendulum takes a finite torque, got {other:?}"
                )))
            }
        };
        if self.state.steps >= self.cfg.episode_steps {
            return Err(Error::contract("episode over; call reset"));
        }
        let (next, reward) = pendulum_step(&self.cfg, self.state, u);
        self.state = next;
        Ok(Step {
            obs: pendulum_observe(&self.cfg, &self.state)?,
            reward,
            done: false,
            truncated: self.state.steps >= self.cfg.episode_steps,
        })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            low: -self.cfg.max_torque,
            high: self.cfg.max_torque,
        }
    }

    fn image_side(&self) -> usize {
        self.cfg.image_size
    }

    fn sound_dim(&self) -> usize {
        self.cfg.sound_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_keeps_pi() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let cfg = PendulumConfig::default();
        let s = PendulumState {
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
        };
        let (n, r) = pendulum_step(&cfg, s, 0.0);
        assert_eq!((n.theta, n.theta_dot, r), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hanging_rest_costs_pi_squared() {
        let cfg = PendulumConfig::default();
        let s = PendulumState {
            theta: PI,
            theta_dot: 0.0,
            steps: 0,
        };
        let (_, r) = pendulum_step(&cfg, s, 0.0);
        assert_eq!(r, -PI * PI);
    }

    #[test]
    fn scripted_controller_swings_up_and_holds() {
        let cfg = PendulumConfig::default();
        let mut s = PendulumState {
            theta: PI,
            theta_dot: 0.1,
            steps: 0,
        };
        let mut tail = 0.0;
        for t in 0..400 {
            let (n, r) = pendulum_step(&cfg, s, scripted_torque(&cfg, &s));
            s = n;
            if t >= 300 {
                tail += r / 100.0;
            }
        }
        assert!(tail > -0.05, "{tail}");
    }
}
