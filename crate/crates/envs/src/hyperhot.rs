//! Top-down shooter. The arena is the unit square with `y` up; the agent
//! slides along the bottom while two groups of enemies march above.
//!
//! Emitter classes: 0 left-group enemies, 1 right-group enemies, 2 enemy
//! bullets, 3 agent bullets.

use std::f64::consts::PI;

use muse_core::config::Config;
use muse_core::error::{Error, Result};
use muse_core::raster;
use muse_core::rng::SplitRng;

use crate::pendulum::flatten_points;
use crate::sound::{dft_magnitude, gaussian_decay_amplitude, synthesize, Vec2};
use crate::{Action, ActionSpace, Env, ModalityMask, Observation, Step};

pub const CLASSES: usize = 4;
pub const WIN_REWARD: f64 = 10.0;
pub const LOSE_REWARD: f64 = -1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct HyperhotConfig {
    pub image_size: usize,
    pub enemies_per_group: usize,
    pub enemy_y: f64,
    pub enemy_spacing: f64,
    pub march_period: usize,
    pub march_amplitude: f64,
    pub fire_interval: usize,
    pub fire_jitter: usize,
    pub cooldown: usize,
    pub episode_limit: usize,
    pub agent_y: f64,
    pub agent_speed: f64,
    pub bullet_speed: f64,
    pub enemy_bullet_speed: f64,
    pub hit_radius: f64,
    pub receivers: Vec<Vec2>,
    pub frequencies: [f64; CLASSES],
    pub amplitudes: [f64; CLASSES],
    pub decay: f64,
    pub a_max: f64,
    pub samples: usize,
    pub sample_rate: f64,
}

impl Default for HyperhotConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            enemies_per_group: 3,
            enemy_y: 0.85,
            enemy_spacing: 0.1,
            march_period: 40,
            march_amplitude: 0.1,
            fire_interval: 25,
            fire_jitter: 5,
            cooldown: 8,
            episode_limit: 500,
            agent_y: 0.08,
            agent_speed: 0.03,
            bullet_speed: 0.05,
            enemy_bullet_speed: 0.025,
            hit_radius: 0.04,
            receivers: vec![(0.0, 0.0), (1.0 / 3.0, 0.0), (2.0 / 3.0, 0.0), (1.0, 0.0)],
            frequencies: [1500.0, 2500.0, 3500.0, 4500.0],
            amplitudes: [1.0; CLASSES],
            decay: 8.0,
            a_max: 4.0,
            samples: 1047,
            sample_rate: 31400.0,
        }
    }
}

fn four(cfg: &Config, key: &str, default: [f64; CLASSES]) -> Result<[f64; CLASSES]> {
    let v = cfg.get_list_or("hyperhot", key, default.to_vec())?;
    v.try_into().map_err(|_| {
        Error::config(
            format!("hyperhot.{key}"),
            "expected 4 values, one per emitter class",
        )
    })
}

impl HyperhotConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let s = "hyperhot";
        let receivers = cfg.get_list_or(s, "receivers", flatten_points(&d.receivers))?;
        if receivers.is_empty() || receivers.len() % 2 != 0 {
            return Err(Error::config(
                "hyperhot.receivers",
                "expected a non-empty list of x,y pairs",
            ));
        }
        let out = Self {
            image_size: cfg.get_or(s, "image_size", d.image_size)?,
            enemies_per_group: cfg.get_or(s, "enemies_per_group", d.enemies_per_group)?,
            enemy_y: cfg.get_or(s, "enemy_y", d.enemy_y)?,
            enemy_spacing: cfg.get_or(s, "enemy_spacing", d.enemy_spacing)?,
            march_period: cfg.get_or(s, "march_period", d.march_period)?,
            march_amplitude: cfg.get_or(s, "march_amplitude", d.march_amplitude)?,
            fire_interval: cfg.get_or(s, "fire_interval", d.fire_interval)?,
            fire_jitter: cfg.get_or(s, "fire_jitter", d.fire_jitter)?,
            cooldown: cfg.get_or(s, "cooldown", d.cooldown)?,
            episode_limit: cfg.get_or(s, "episode_limit", d.episode_limit)?,
            agent_y: cfg.get_or(s, "agent_y", d.agent_y)?,
            agent_speed: cfg.get_or(s, "agent_speed", d.agent_speed)?,
            bullet_speed: cfg.get_or(s, "bullet_speed", d.bullet_speed)?,
            enemy_bullet_speed: cfg.get_or(s, "enemy_bullet_speed", d.enemy_bullet_speed)?,
            hit_radius: cfg.get_or(s, "hit_radius", d.hit_radius)?,
            receivers: receivers.chunks(2).map(|p| (p[0], p[1])).collect(),
            frequencies: four(cfg, "frequencies", d.frequencies)?,
            amplitudes: four(cfg, "amplitudes", d.amplitudes)?,
            decay: cfg.get_or(s, "decay", d.decay)?,
            a_max: cfg.get_or(s, "a_max", d.a_max)?,
            samples: cfg.get_or(s, "samples", d.samples)?,
            sample_rate: cfg.get_or(s, "sample_rate", d.sample_rate)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::config("hyperhot.image_size", "must be at least 8"));
        }
        if self.enemies_per_group == 0 {
            return Err(Error::config(
                "hyperhot.enemies_per_group",
                "must be positive",
            ));
        }
        if self.march_period == 0 || self.fire_interval <= self.fire_jitter {
            return Err(Error::config(
                "hyperhot.fire_interval",
                "must be positive and exceed fire_jitter",
            ));
        }
        if self.episode_limit == 0 || self.samples == 0 {
            return Err(Error::config("hyperhot.episode_limit", "must be positive"));
        }
        if !(self.a_max > 0.0 && self.sample_rate > 0.0) {
            return Err(Error::config(
                "hyperhot.a_max",
                "a_max and sample_rate must be positive",
            ));
        }
        let span =
            self.march_amplitude + (self.enemies_per_group as f64 - 1.0) * self.enemy_spacing;
        if 0.15 + span >= 0.5 {
            return Err(Error::config(
                "hyperhot.enemy_spacing",
                "enemy groups would overlap or leave the arena",
            ));
        }
        Ok(())
    }

    pub fn sound_dim(&self) -> usize {
        self.receivers.len() * CLASSES
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Enemy {
    pub base_x: f64,
    pub pos: Vec2,
    pub group: Group,
    pub alive: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Owner {
    Agent,
    Enemy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bullet {
    pub pos: Vec2,
    pub vel: Vec2,
    pub owner: Owner,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperhotState {
    pub agent_x: f64,
    pub cooldown: usize,
    pub enemies: Vec<Enemy>,
    pub bullets: Vec<Bullet>,
    pub t: usize,
    pub next_fire: usize,
    pub done: bool,
}

impl HyperhotState {
    pub fn live_enemies(&self) -> usize {
        self.enemies.iter().filter(|e| e.alive).count()
    }

    /// Live sound emitters as `(position, class)`.
    pub fn emitters(&self) -> Vec<(Vec2, usize)> {
        let mut out: Vec<(Vec2, usize)> = self
            .enemies
            .iter()
            .filter(|e| e.alive)
            .map(|e| (e.pos, if e.group == Group::Left { 0 } else { 1 }))
            .collect();
        out.extend(
            self.bullets
                .iter()
                .map(|b| (b.pos, if b.owner == Owner::Enemy { 2 } else { 3 })),
        );
        out
    }
}

pub const NOOP: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const SHOOT: usize = 3;
pub const ACTIONS: usize = 4;

fn march_offset(cfg: &HyperhotConfig, t: usize) -> f64 {
    cfg.march_amplitude * (2.0 * PI * t as f64 / cfg.march_period as f64).sin()
}

pub fn initial_state(cfg: &HyperhotConfig, rng: &mut SplitRng) -> HyperhotState {
    let mut enemies = Vec::with_capacity(2 * cfg.enemies_per_group);
    for (group, start) in [(Group::Left, 0.15), (Group::Right, 0.85)] {
        for i in 0..cfg.enemies_per_group {
            let off = i as f64 * cfg.enemy_spacing;
            let base_x = if group == Group::Left {
                start + off
            } else {
                start - off
            };
            enemies.push(Enemy {
                base_x,
                pos: (base_x, cfg.enemy_y),
                group,
                alive: true,
            });
        }
    }
    HyperhotState {
        agent_x: rng.uniform_range(0.2, 0.8),
        cooldown: 0,
        enemies,
        bullets: Vec::new(),
        t: 0,
        next_fire: next_fire_delay(cfg, rng),
        done: false,
    }
}

fn next_fire_delay(cfg: &HyperhotConfig, rng: &mut SplitRng) -> usize {
    cfg.fire_interval - cfg.fire_jitter + rng.below(2 * cfg.fire_jitter + 1)
}

fn near(a: Vec2, b: Vec2, r: f64) -> bool {
    (a.0 - b.0).abs() < r && (a.1 - b.1).abs() < r
}

/// Advance one step. Returns `(reward, done)`.
pub fn hyperhot_step(
    cfg: &HyperhotConfig,
    s: &mut HyperhotState,
    action: usize,
    rng: &mut SplitRng,
) -> Result<(f64, bool)> {
    if s.done {
        return Err(Error::contract("episode over; call reset"));
    }
    if action >= ACTIONS {
        return Err(Error::contract(format!(
            "hyperhot has {ACTIONS} actions, got {action}"
        )));
    }
    match action {
        LEFT => s.agent_x -= cfg.agent_speed,
        RIGHT => s.agent_x += cfg.agent_speed,
        _ => {}
    }
    s.agent_x = s.agent_x.clamp(0.05, 0.95);
    s.cooldown = s.cooldown.saturating_sub(1);
    if action == SHOOT && s.cooldown == 0 {
        s.bullets.push(Bullet {
            pos: (s.agent_x, cfg.agent_y + 0.03),
            vel: (0.0, cfg.bullet_speed),
            owner: Owner::Agent,
        });
        s.cooldown = cfg.cooldown;
    }

    let off = march_offset(cfg, s.t + 1);
    for e in &mut s.enemies {
        e.pos.0 = e.base_x + off;
    }
    for b in &mut s.bullets {
        b.pos.0 += b.vel.0;
        b.pos.1 += b.vel.1;
    }
    s.bullets.retain(|b| (-0.05..=1.05).contains(&b.pos.1));

    let mut hit = false;
    let mut spent = vec![false; s.bullets.len()];
    for (i, b) in s.bullets.iter().enumerate() {
        match b.owner {
            Owner::Agent => {
                if let Some(e) = s
                    .enemies
                    .iter_mut()
                    .find(|e| e.alive && near(e.pos, b.pos, cfg.hit_radius))
                {
                    e.alive = false;
                    spent[i] = true;
                }
            }
            Owner::Enemy => {
                if near(b.pos, (s.agent_x, cfg.agent_y), cfg.hit_radius) {
                    hit = true;
                    spent[i] = true;
                }
            }
        }
    }
    let mut keep = spent.iter().map(|s| !s);
    s.bullets.retain(|_| keep.next().unwrap_or(true));

    s.t += 1;
    if s.t >= s.next_fire {
        let live: Vec<usize> = (0..s.enemies.len())
            .filter(|&i| s.enemies[i].alive)
            .collect();
        if !live.is_empty() {
            let e = s.enemies[live[rng.below(live.len())]];
            s.bullets.push(Bullet {
                pos: (e.pos.0, e.pos.1 - 0.03),
                vel: (0.0, -cfg.enemy_bullet_speed),
                owner: Owner::Enemy,
            });
        }
        s.next_fire = s.t + next_fire_delay(cfg, rng);
    }

    let (reward, done) = if s.live_enemies() == 0 {
        (WIN_REWARD, true)
    } else if hit || s.t >= cfg.episode_limit {
        (LOSE_REWARD, true)
    } else {
        (0.0, false)
    };
    s.done = done;
    Ok((reward, done))
}

/// Waveform per receiver: the quantized sum of every emitter's sinusoid.
pub fn waveforms(
    cfg: &HyperhotConfig,
    emitters: &[(Vec2, usize)],
    receivers: &[Vec2],
) -> Vec<Vec<i16>> {
    receivers
        .iter()
        .map(|&r| {
            let comps: Vec<(f64, f64)> = emitters
                .iter()
                .map(|&(p, k)| {
                    (
                        cfg.frequencies[k],
                        gaussian_decay_amplitude(cfg.amplitudes[k], cfg.decay, p, r),
                    )
                })
                .collect();
            synthesize(&comps, cfg.samples, cfg.sample_rate, cfg.a_max)
        })
        .collect()
}

/// DFT magnitude at each class frequency for each receiver, receiver-major.
pub fn hyperhot_sound(
    cfg: &HyperhotConfig,
    emitters: &[(Vec2, usize)],
    receivers: &[Vec2],
) -> Vec<f64> {
    if emitters.is_empty() {
        return vec![0.0; receivers.len() * CLASSES];
    }
    waveforms(cfg, emitters, receivers)
        .iter()
        .flat_map(|w| {
            cfg.frequencies
                .iter()
                .map(|&f| dft_magnitude(w, f, cfg.sample_rate, cfg.a_max))
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn render(cfg: &HyperhotConfig, s: &HyperhotState) -> Vec<f64> {
    let n = cfg.image_size;
    let px = n as f64;
    let mut img = vec![0.0; n * n];
    let at = |p: Vec2| (p.0 * px, p.1 * px);
    let (ax, ay) = at((s.agent_x, cfg.agent_y));
    raster::fill_rect(
        &mut img,
        n,
        (ax - 1.5, ay - 0.75),
        (ax + 1.5, ay + 0.75),
        1.0,
    );
    for e in s.enemies.iter().filter(|e| e.alive) {
        raster::draw_disc(&mut img, n, at(e.pos), 1.2, 0.7);
    }
    for b in &s.bullets {
        let v = if b.owner == Owner::Agent { 0.9 } else { 0.45 };
        let (x, y) = at(b.pos);
        raster::fill_rect(&mut img, n, (x - 0.5, y - 1.0), (x + 0.5, y + 1.0), v);
    }
    img
}

pub fn observe(cfg: &HyperhotConfig, s: &HyperhotState) -> Observation {
    Observation {
        image: render(cfg, s),
        sound: hyperhot_sound(cfg, &s.emitters(), &cfg.receivers),
        mask: ModalityMask::JOINT,
    }
}

/// Hand-written policy: dodge bullets that are about to land, otherwise
/// line up under the enemy whose predicted position is nearest and fire.
pub fn scripted_action(cfg: &HyperhotConfig, s: &HyperhotState) -> usize {
    let danger = s
        .bullets
        .iter()
        .filter(|b| {
            b.owner == Owner::Enemy
                && b.pos.1 < cfg.agent_y + 0.3
                && (b.pos.0 - s.agent_x).abs() < 2.0 * cfg.hit_radius
        })
        .min_by(|a, b| a.pos.1.total_cmp(&b.pos.1));
    if let Some(b) = danger {
        let go_left = if s.agent_x < 0.12 {
            false
        } else if s.agent_x > 0.88 {
            true
        } else {
            b.pos.0 >= s.agent_x
        };
        return if go_left { LEFT } else { RIGHT };
    }
    let flight = ((cfg.enemy_y - cfg.agent_y) / cfg.bullet_speed).ceil() as usize;
    let lead = march_offset(cfg, s.t + flight + 1);
    let target = s
        .enemies
        .iter()
        .filter(|e| e.alive)
        .map(|e| e.base_x + lead)
        .min_by(|a, b| (a - s.agent_x).abs().total_cmp(&(b - s.agent_x).abs()));
    match target {
        Some(x) if (x - s.agent_x).abs() <= cfg.agent_speed / 2.0 => {
            if s.cooldown <= 1 {
                SHOOT
            } else {
                NOOP
            }
        }
        Some(x) if x < s.agent_x => LEFT,
        Some(_) => RIGHT,
        None => NOOP,
    }
}

pub struct Hyperhot {
    pub cfg: HyperhotConfig,
    pub state: HyperhotState,
    rng: SplitRng,
}

impl Hyperhot {
    pub fn new(cfg: HyperhotConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SplitRng::new(0);
        let state = initial_state(&cfg, &mut rng);
        Ok(Self { cfg, state, rng })
    }
}

impl Env for Hyperhot {
    fn name(&self) -> &'static str {
        "hyperhot"
    }

    fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = SplitRng::derive_labeled(seed, "hyperhot");
        self.state = initial_state(&self.cfg, &mut self.rng);
        Ok(observe(&self.cfg, &self.state))
    }

    fn step(&mut self, action: Action) -> Result<Step> {
        let a = match action {
            Action::Discrete(a) => a,
            other => {
                return Err(Error::contract(format!(
                    "hyperhot takes a discrete action, got {other:?}"
                )))
            }
        };
        let (reward, done) = hyperhot_step(&self.cfg, &mut self.state, a, &mut self.rng)?;
        Ok(Step {
            obs: observe(&self.cfg, &self.state),
            reward,
            done,
            truncated: false,
        })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(ACTIONS)
    }

    fn image_side(&self) -> usize {
        self.cfg.image_size
    }

    fn sound_dim(&self) -> usize {
        self.cfg.sound_dim()
    }
}
