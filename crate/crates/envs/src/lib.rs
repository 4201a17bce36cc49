//! Multimodal control environments: a pendulum heard through Doppler-shifted
//! sound, and a top-down shooter with a synthesized sound field.

pub mod dump;
pub mod hyperhot;
pub mod pendulum;
pub mod sound;

use std::fmt;
use std::str::FromStr;

use muse_core::error::{Error, Result};

pub const IMAGE: &str = "image";
pub const SOUND: &str = "sound";

/// Which modalities an observation carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModalityMask {
    pub image: bool,
    pub sound: bool,
}

impl ModalityMask {
    pub const JOINT: Self = Self {
        image: true,
        sound: true,
    };
    pub const IMAGE_ONLY: Self = Self {
        image: true,
        sound: false,
    };
    pub const SOUND_ONLY: Self = Self {
        image: false,
        sound: true,
    };
    pub const NONE: Self = Self {
        image: false,
        sound: false,
    };

    pub fn as_array(self) -> [bool; 2] {
        [self.image, self.sound]
    }

    pub fn and(self, other: Self) -> Self {
        Self {
            image: self.image && other.image,
            sound: self.sound && other.sound,
        }
    }

    pub fn any(self) -> bool {
        self.image || self.sound
    }
}

impl Default for ModalityMask {
    fn default() -> Self {
        Self::JOINT
    }
}

impl fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match (self.image, self.sound) {
            (true, true) => "joint",
            (true, false) => "image",
            (false, true) => "sound",
            (false, false) => "none",
        })
    }
}

impl FromStr for ModalityMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::JOINT),
            "image" => Ok(Self::IMAGE_ONLY),
            "sound" => Ok(Self::SOUND_ONLY),
            "none" => Ok(Self::NONE),
            other => Err(Error::config(
                "mask",
                format!("unknown modality mask `{other}` (joint, image, sound, none)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Row-major grayscale image in `[0, 1]`.
    pub image: Vec<f64>,
    pub sound: Vec<f64>,
    pub mask: ModalityMask,
}

impl Observation {
    /// The same observation with `mask` applied on top of the current one.
    /// Hidden modalities are zeroed as well as flagged.
    pub fn masked(mut self, mask: ModalityMask) -> Self {
        self.mask = self.mask.and(mask);
        if !self.mask.image {
            self.image.iter_mut().for_each(|v| *v = 0.0);
        }
        if !self.mask.sound {
            self.sound.iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: f64, high: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub reward: f64,
    /// Terminal: no bootstrapping past this transition.
    pub done: bool,
    /// Episode cut by a step limit without reaching a terminal state.
    pub truncated: bool,
}

pub trait Env {
    fn name(&self) -> &'static str;
    fn reset(&mut self, seed: u64) -> Result<Observation>;
    fn step(&mut self, action: Action) -> Result<Step>;
    fn action_space(&self) -> ActionSpace;
    fn image_side(&self) -> usize;
    fn sound_dim(&self) -> usize;
}
